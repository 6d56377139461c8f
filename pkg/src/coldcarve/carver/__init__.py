"""Recovering a model from a decayed memory image."""

from .architecture import carve_architecture, carve_architecture_xml, find_anchors, tags_balanced
from .report import CarveReport, Sanitization, XmlRepair
from .tokens import DEFAULT_DICTIONARY, TokenDictionary, edit_distance, repair_token
from .utf8 import is_valid_utf8_window, valid_windows
from .weights import carve_weights, sanitize_weights, zero_out_of_range
from .recover import CORRECTIONS, Recovery, recover, recover_model

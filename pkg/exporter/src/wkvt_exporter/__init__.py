"""Capture transformer attention into WKVT trace files."""

from .capture import ExportError, ExportJob, capture_attention, capture_qk, export, export_from_model
from .wire import attn_file_bytes, qk_file_bytes, write_file

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportJob",
    "attn_file_bytes",
    "capture_attention",
    "capture_qk",
    "export",
    "export_from_model",
    "qk_file_bytes",
    "write_file",
]

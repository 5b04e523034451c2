"""Export wav2vec2-family transformer hidden states into SSLF feature files."""

from .backbone import Wav2Vec2Backbone
from .export import ExportJob, ExportLog, run_export

__all__ = ["ExportJob", "ExportLog", "Wav2Vec2Backbone", "run_export"]

__version__ = "0.1.0"

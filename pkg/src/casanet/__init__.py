"""Audio-visual speaker diarization with cross-attention / self-attention fusion."""

__version__ = "0.1.0"

"""Sentence-level forced alignment and ASR corpus construction toolkit."""

__version__ = "0.1.0"

FORMAT_VERSIONS = {
    "asr_json": 1,
    "alignment_path": 1,
    "iou_model": 1,
    "manifest": 1,
}

"""Entity association mining over news corpora.

Pipeline: JSONL ingestion and segmentation, lexical or semantic
filtering, near-duplicate clustering, pluggable entity extraction,
windowed co-occurrence counting, and trend/graph outputs.
"""

__version__ = "0.1.0"

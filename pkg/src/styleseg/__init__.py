"""Discovery of segmentation styles from image-mask corpora without annotator IDs."""

__version__ = "0.1.0"

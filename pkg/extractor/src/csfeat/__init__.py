"""csfeat: feature extraction adapter for the coresift selection engine.

Encodes image-text instruction records with pluggable encoder backends and
writes the engine's on-disk contracts (SFFM feature matrix + JSONL metadata),
so the selection pipeline can run on real corpora.
"""

__version__ = "0.1.0"

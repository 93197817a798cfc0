"""Canonical JSON encoding and hashing.

Every serialized artifact (tree documents, transcripts, state hashes) goes
through these helpers so that byte-identical round trips and replay hashes
are well defined: keys sorted, fixed separators, floats via shortest
round-trip repr.
"""

import hashlib
import json


def canon_dumps(obj, indent=None):
    return json.dumps(obj, sort_keys=True, indent=indent,
                      separators=(",", ": ") if indent else (",", ":"),
                      ensure_ascii=False)


def canon_line(obj):
    """Single-line canonical encoding (transcript records)."""
    return canon_dumps(obj, indent=None)


def canon_document(obj):
    """Multi-line canonical encoding (shipped documents), trailing newline."""
    return canon_dumps(obj, indent=2) + "\n"


def digest(obj):
    """Stable sha256 hex digest of any JSON-serializable value."""
    return hashlib.sha256(canon_line(obj).encode("utf-8")).hexdigest()

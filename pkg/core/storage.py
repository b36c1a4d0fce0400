"""
Atomic file output.

Every file the lab produces goes through a temporary sibling and os.replace,
so a reader never sees a half-written results.csv or checkpoint.
"""
import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path

logger = logging.getLogger(__name__)


def write_bytes_atomic(path, payload):
    """Write payload to a temporary sibling, then rename it over path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Wrote {path} ({len(payload)} bytes)")
    return path


def write_text_atomic(path, text):
    return write_bytes_atomic(path, text.encode('utf-8'))


def write_csv_atomic(path, header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return write_text_atomic(path, buffer.getvalue())


def write_json_atomic(path, payload):
    return write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + '\n')


def format_real(value):
    """Shortest round-tripping text for a float; used in every csv column."""
    return repr(float(value))

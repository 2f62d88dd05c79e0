"""
File helpers shared by the toolkit: JSON documents and JSON-lines streams.
"""
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Iterator, List, Union

from .errors import ParseError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def ensure_dir(path: PathLike) -> Path:
    """Create a directory (and parents) if missing and return it as a Path."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def dump_json(obj: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: PathLike, obj: Any) -> Path:
    """
    Write a JSON document in canonical formatting.

    Args:
        path: Destination file
        obj: JSON-serializable object

    Returns:
        The destination path
    """
    out = Path(path)
    ensure_dir(out.parent)
    out.write_text(dump_json(obj))
    logger.info(f"Wrote {out}")
    return out


def read_json(path: PathLike) -> Any:
    """Read a JSON document, raising ParseError on malformed content."""
    src = Path(path)
    try:
        return json.loads(src.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, path=str(src)) from e


def write_jsonl(path: PathLike, rows: Iterable[Any], header: Any = None) -> Path:
    """
    Write one compact JSON object per line.

    Args:
        path: Destination file
        rows: JSON-serializable objects
        header: Optional object written first as {"header": ...}

    Returns:
        The destination path
    """
    out = Path(path)
    ensure_dir(out.parent)
    count = 0
    with open(out, "w") as fh:
        if header is not None:
            fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            count += 1
    logger.info(f"Wrote {count} rows to {out}")
    return out


def iter_jsonl(path: PathLike) -> Iterator[tuple]:
    """Yield (line_number, object) for every non-blank line of a JSON-lines file."""
    src = Path(path)
    with open(src) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(e.msg, line=lineno, path=str(src)) from e


def read_jsonl(path: PathLike) -> List[Any]:
    """Read every row of a JSON-lines file, skipping a leading header row."""
    rows = []
    for lineno, obj in iter_jsonl(path):
        if lineno == 1 and isinstance(obj, dict) and set(obj) == {"header"}:
            continue
        rows.append(obj)
    return rows

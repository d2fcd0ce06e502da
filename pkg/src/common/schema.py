import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict

from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from src.common.errors import RecordSchemaError
from src.common.utils import get_logger

logger = get_logger(__name__)

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schema"


@lru_cache(maxsize=None)
def get_validator(schema_name: str) -> Draft202012Validator:
    """Load and compile a packaged schema, e.g. 'corpus.document.v1'."""
    path = SCHEMA_DIR / f"{schema_name}.json"
    with open(path, "r", encoding="utf-8") as f:
        schema = json.load(f)
    Draft202012Validator.check_schema(schema)
    logger.debug(f"Loaded schema {schema_name} from {path}")
    return Draft202012Validator(schema)


def validate_record(schema_name: str, record: Any, line_number: int | None = None) -> Dict[str, Any]:
    """Validate one decoded record; raise RecordSchemaError with the most relevant violation."""
    validator = get_validator(schema_name)
    error = best_match(validator.iter_errors(record))
    if error is not None:
        where = f"line {line_number}: " if line_number is not None else ""
        path = [str(p) for p in error.absolute_path]
        location = "/".join(path) or "<root>"
        raise RecordSchemaError(
            f"{where}{schema_name} violation at {location}: {error.message}",
            line_number=line_number,
            validation_path=path,
        )
    return record


def parse_line(schema_name: str, line: str, line_number: int) -> Dict[str, Any]:
    """Decode one JSONL line and validate it."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise RecordSchemaError(f"line {line_number}: invalid JSON ({e.msg})", line_number=line_number) from e
    return validate_record(schema_name, record, line_number)

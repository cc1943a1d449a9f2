"""CSV result tables: `# key=value` metadata lines, a header row, then data rows."""
import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, TextIO, Union

METADATA_PREFIX = "#"


@dataclass
class Table:
    columns: List[str]
    rows: List[List[Any]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)


def format_value(value: Any) -> str:
    """Floats use repr so values round-trip exactly; inf and nan stay readable."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "dtype"):
        return format_value(value.item())
    if value is None:
        return ""
    return str(value)


def parse_value(text: str) -> Any:
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_csv(stream: TextIO, table: Table) -> None:
    if table.metadata:
        pairs = " ".join(f"{key}={format_value(value)}" for key, value in table.metadata.items())
        stream.write(f"{METADATA_PREFIX} {pairs}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_value(value) for value in row])


def dumps(table: Table) -> str:
    buffer = io.StringIO()
    write_csv(buffer, table)
    return buffer.getvalue()


def read_csv(source: Union[str, Path, TextIO]) -> Table:
    """Parse a table written by `write_csv`; numeric cells come back as int or float."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as handle:
            return read_csv(handle)
    metadata: Dict[str, Any] = {}
    body: List[str] = []
    for line in source:
        if line.startswith(METADATA_PREFIX):
            for token in line[1:].split():
                key, _, value = token.partition("=")
                metadata[key] = value
        else:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader, [])
    rows = [[parse_value(cell) for cell in row] for row in reader if row]
    return Table(columns=columns, rows=rows, metadata=metadata)


def column(table: Table, name: str) -> List[Any]:
    index = table.columns.index(name)
    return [row[index] for row in table.rows]


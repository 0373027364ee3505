"""Writers and readers for the CSV, JSON and JSON-lines files the commands emit."""

import csv
import json
import os
import typing

import torch

FLOAT_FORMAT = ".17g"


def format_float(value: float) -> str:
    """17 significant digits: parses back to the identical float64."""
    return format(float(value), FLOAT_FORMAT)


def ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_csv(path: str, header: typing.Sequence[str], rows: typing.Iterable[typing.Sequence]):
    """Writes UTF-8 CSV with LF line endings; floats use :func:`format_float`."""
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, float) else v for v in row]
            )


def read_csv(path: str) -> typing.Tuple[typing.List[str], typing.List[typing.List[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]


def write_matrix_csv(path: str, m: torch.Tensor, prefix: str = "dim"):
    header = [f"{prefix}{j}" for j in range(m.shape[1])]
    write_csv(path, header, ([float(v) for v in row] for row in m.tolist()))


def read_matrix_csv(path: str) -> torch.Tensor:
    """Reads a numeric CSV with a header row into a float64 matrix."""
    _, rows = read_csv(path)
    return torch.tensor([[float(v) for v in row] for row in rows], dtype=torch.float64)


def write_json(path: str, document):
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_jsonl(path: str, records: typing.Iterable[dict]):
    ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True))
            f.write("\n")


def read_jsonl(path: str) -> typing.List[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]

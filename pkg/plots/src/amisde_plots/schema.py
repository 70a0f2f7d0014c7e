"""CSV schema guards for the benchmark outputs consumed by the plots."""

import csv

RESULT_COLUMNS = [
    "experiment",
    "scheme",
    "run",
    "iteration",
    "total_samples",
    "psi_hat",
    "ess_hat",
    "j_hat",
    "adapt_ns",
    "generate_ns",
    "reweight_ns",
]

DENSITY_COLUMNS = ["u", "x", "hq_over_pu", "pu", "hq"]


class SchemaError(ValueError):
    """Input file does not match the benchmark CSV schema."""


def read_csv(path: str, expected_columns: list[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        if list(reader.fieldnames) != expected_columns:
            raise SchemaError(
                f"{path}: header {reader.fieldnames} does not match the expected "
                f"schema {expected_columns}"
            )
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def read_result_rows(path: str) -> list[dict]:
    rows = read_csv(path, RESULT_COLUMNS)
    try:
        for row in rows:
            row["run"] = int(row["run"])
            row["iteration"] = int(row["iteration"])
            row["total_samples"] = int(row["total_samples"])
            row["ess_hat"] = float(row["ess_hat"])
            row["psi_hat"] = float(row["psi_hat"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: non-numeric value ({exc})") from exc
    return rows


def read_density_rows(path: str) -> list[dict]:
    rows = read_csv(path, DENSITY_COLUMNS)
    try:
        for row in rows:
            for key in DENSITY_COLUMNS:
                row[key] = float(row[key])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: non-numeric value ({exc})") from exc
    return rows

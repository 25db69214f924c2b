"""CSV and JSON writers with fixed column schemas.

Every table is written with ``\\n`` line endings, floats in ``%.12e`` and
booleans as ``true``/``false`` so that identical inputs give identical
bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from importlib import resources
from pathlib import Path

__all__ = [
    "CSV_SCHEMA_VERSION",
    "CSV_SCHEMAS",
    "format_value",
    "write_csv",
    "read_csv",
    "load_schema",
    "canonical_json",
]

CSV_SCHEMA_VERSION = 1

CSV_SCHEMAS: dict[str, tuple[str, ...]] = {
    "qnf": ("ell_hint", "k", "re_lambda", "im_lambda", "residual", "converged"),
    "scan": ("re_z", "im_z", "inv_sigma_min"),
    "match": ("ell", "lambda_sharp", "quasimode_residual", "re_pole", "im_pole", "distance"),
    "quasimodes": ("ell", "lambda_sharp", "residual", "r1", "transition_width"),
    "energy": ("source", "Y", "re_lambda", "im_lambda", "n_coarse", "residual_coarse", "n_fine",
               "residual_fine", "time_derivative_term", "boundary_Y_term", "horizon_term",
               "bulk_term", "horizon_integrand_min"),
    "indicial": ("k", "re_lambda", "im_lambda", "s_re", "s_im", "root2_re", "root2_im"),
    "trajectory": ("t", "r", "theta", "xi_r", "xi_theta", "xi_phi", "p", "exit_reason"),
    "flow_summary": ("seed", "r", "theta", "z", "outcome", "forward_exit", "drift"),
    "probe": ("re_lambda", "im_lambda", "product"),
}


def format_value(v) -> str:
    """Deterministic text form of a table cell."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12e}"
    if v is None:
        return ""
    if hasattr(v, "item"):  # numpy scalar
        return format_value(v.item())
    return str(v)


def write_csv(path: str | Path, table: str, rows) -> Path:
    """Write ``rows`` under the named schema and return the path."""
    header = CSV_SCHEMAS[table]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        row = tuple(row)
        if len(row) != len(header):
            raise ValueError(f"{table}: row has {len(row)} cells, schema has {len(header)}")
        w.writerow([format_value(v) for v in row])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _parse(cell: str):
    if cell in ("true", "false"):
        return cell == "true"
    if cell == "":
        return None
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def read_csv(path: str | Path) -> list[dict]:
    """Read a table written by :func:`write_csv` into typed records."""
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse(v) for k, v in rec.items()} for rec in csv.DictReader(fh)]


def load_schema(name: str) -> dict:
    """Load a packaged JSON schema (``'config'`` or ``'results'``)."""
    text = resources.files("adsqnm").joinpath("schema", f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)


def canonical_json(obj) -> str:
    """Key-sorted compact JSON used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)

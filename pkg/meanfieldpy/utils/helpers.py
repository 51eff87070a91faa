import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List

# Keys of every JSON document written by the CLI, checked by the tests.
OUTPUT_KEYS: Dict[str, tuple] = {
    "constants": ("A_P", "lambda_half", "A_tilde_P", "bound_approx1", "bound_approx2",
                  "robin_plus", "half_period_plus", "maxim_threshold", "maxim_margin"),
    "green": ("A", "A_tilde", "delta", "center", "ell", "expansion", "constants"),
    "certificate": ("lower_bound_value", "cond_lhs", "cond_rhs", "cond_holds",
                    "hy2_value", "hy2_holds", "inputs"),
    "solve": ("epsilon", "rho", "J", "grad_norm", "el_residual", "lambda_eps", "c_eps",
              "x_eps", "iterations", "converged", "status"),
    "bubble": ("r_eps", "profile_error", "radial_error", "mass_fractions", "R_used", "lemma42_ratio",
               "fraction_sum"),
    "manifest": ("command", "version", "config_digest", "input_hash", "started_at",
                 "finished_at", "files"),
    "error": ("error", "message", "exit_code"),
}

SOLVE_COLUMNS = ("iter", "J", "grad_norm", "residual", "step", "c_eps", "lambda_eps")
CONTINUE_COLUMNS = ("eps", "rho", "J", "el_residual", "c_eps", "lambda_eps", "x1", "x2",
                    "r_eps", "lemma42_ratio", "status")
PROFILE_COLUMNS = ("r", "phi_eps", "phi", "difference")
TESTFN_COLUMNS = ("eps", "R", "R_clamped", "J_numeric", "C_star", "gap_numeric",
                  "gap_asymptotic", "finite_R_correction", "gap_corrected")


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def digest(payload: Any) -> str:
    """SHA-256 of the canonical JSON form of ``payload``."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def sha256_file(path: str, chunk_size: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            h.update(chunk)
    return h.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunRecord:
    """
    Manifest of one CLI run.

    ``input_hash`` covers the command, package version and configuration
    only, so identical runs share it; timestamps are kept apart.
    """
    command: str
    version: str
    config_digest: str
    started_at: str = field(default_factory=utc_now)
    finished_at: str = ""
    files: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def input_hash(self) -> str:
        return digest({"command": self.command, "version": self.version, "config": self.config_digest})

    def add_file(self, path: str, root: str) -> None:
        self.files.append({
            "path": os.path.relpath(path, root),
            "sha256": sha256_file(path),
            "bytes": os.path.getsize(path),
        })

    def finish(self) -> "RunRecord":
        self.finished_at = utc_now()
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["input_hash"] = self.input_hash
        return data

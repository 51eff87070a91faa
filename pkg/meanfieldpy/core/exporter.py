# core/exporter.py
import csv
import io
import json
import logging
import os
import struct
import tempfile
from typing import Any, Iterable, Sequence, Union

import numpy as np

from .errors import ConfigurationError
from .spectral import GridField, grid_nodes
from .torus import TorusLattice

logger = logging.getLogger(__name__)

GRID_MAGIC = b"MFGRID1\0"
_HEADER = struct.Struct("<8sqqdddd")


class Exporter:
    """
    Writes run artifacts. Every file is written to a temporary name in the
    target directory and moved into place, so readers never see partial files.
    """
    @staticmethod
    def export(filename: str, content: Union[str, bytes]) -> str:
        directory = os.path.dirname(os.path.abspath(filename))
        os.makedirs(directory, exist_ok=True)
        data = content.encode("utf-8") if isinstance(content, str) else content
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, filename)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        logger.debug("wrote %s (%d bytes)", filename, len(data))
        return filename

    @staticmethod
    def export_json(filename: str, payload: Any) -> str:
        return Exporter.export(filename, json.dumps(payload, sort_keys=True, indent=2) + "\n")

    @staticmethod
    def export_csv(filename: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return Exporter.export(filename, buffer.getvalue())

    @staticmethod
    def export_grid(filename: str, field: GridField) -> str:
        """
        Binary layout: magic, int64 n1, n2, float64 a1, a2, b1, b2, then the
        values as row-major little-endian float64.
        """
        a, b = field.lattice.basis_a, field.lattice.basis_b
        header = _HEADER.pack(GRID_MAGIC, field.n1, field.n2, a[0], a[1], b[0], b[1])
        body = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
        return Exporter.export(filename, header + body)

    @staticmethod
    def export_grid_csv(filename: str, field: GridField) -> str:
        xi1, xi2 = grid_nodes(field.n1, field.n2)
        xy = field.lattice.to_cartesian(np.stack([xi1, xi2], axis=-1)).reshape(-1, 2)
        rows = zip(xy[:, 0], xy[:, 1], field.values.ravel())
        return Exporter.export_csv(filename, ["x1", "x2", "value"], rows)

    @staticmethod
    def load_grid(filename: str) -> GridField:
        """
        Raises:
            ConfigurationError: If the file is not a grid file or is truncated.
        """
        with open(filename, "rb") as f:
            data = f.read()
        if len(data) < _HEADER.size:
            raise ConfigurationError(f"{filename} is too short to be a grid file")
        magic, n1, n2, a1, a2, b1, b2 = _HEADER.unpack_from(data)
        if magic != GRID_MAGIC:
            raise ConfigurationError(f"{filename} is not a grid file")
        expected = _HEADER.size + 8 * n1 * n2
        if len(data) != expected:
            raise ConfigurationError(f"{filename} has {len(data)} bytes, expected {expected}")
        values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(n1, n2)
        return GridField(values, TorusLattice((a1, a2), (b1, b2)))

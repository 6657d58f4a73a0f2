"""Readers for IDX image/label files and numeric CSV series, plus model fitting."""
from __future__ import annotations

import csv
import os
import struct

import numpy as np

from ..errors import DataError, ValidationError
from ..gaussian import GaussianBelief
from ..gmm import GmmBelief

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
_IDX_TYPES = {0x08: np.dtype(">u1"), 0x09: np.dtype(">i1"), 0x0B: np.dtype(">i2"),
              0x0C: np.dtype(">i4"), 0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8")}


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read file: {exc.strerror}", path=os.fspath(path)) from exc


def load_idx(path) -> np.ndarray:
    """Parse a big-endian IDX file into an array of its declared shape.

    The header is two zero bytes, a type code, the number of dimensions,
    then one big-endian ``uint32`` per dimension. The payload must match the
    declared size exactly.
    """
    path = os.fspath(path)
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise DataError("file too short for an IDX header", path=path, offset=len(raw))
    if raw[0] != 0 or raw[1] != 0:
        raise DataError(f"bad IDX magic 0x{int.from_bytes(raw[:4], 'big'):08x}", path=path, offset=0)
    code, ndim = raw[2], raw[3]
    if code not in _IDX_TYPES:
        raise DataError(f"unknown IDX element type 0x{code:02x}", path=path, offset=2)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataError("truncated IDX dimension header", path=path, offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_TYPES[code]
    expected = header + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(raw) != expected:
        raise DataError(f"payload size mismatch: expected {expected} bytes, found {len(raw)}",
                        path=path, offset=min(len(raw), expected))
    data = np.frombuffer(raw, dtype=dtype, offset=header)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def _check_magic(path, expected: int) -> None:
    raw = _read_bytes(path)[:4]
    magic = int.from_bytes(raw, "big") if len(raw) == 4 else -1
    if magic != expected:
        raise DataError(f"expected IDX magic 0x{expected:08x}, found 0x{max(magic, 0):08x}",
                        path=os.fspath(path), offset=0)


def load_mnist(images_path, labels_path, limit: int | None = None):
    """Images flattened to rows scaled to ``[0, 1]``, and integer labels.

    Raises :class:`DataError` when the magic numbers are wrong or the label
    count differs from the image count.
    """
    _check_magic(images_path, IDX_IMAGES_MAGIC)
    _check_magic(labels_path, IDX_LABELS_MAGIC)
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if labels.shape[0] != images.shape[0]:
        raise DataError(f"{labels.shape[0]} labels for {images.shape[0]} images",
                        path=os.fspath(labels_path), offset=8)
    x = images.reshape(images.shape[0], -1).astype(float) / 255.0
    y = labels.astype(int)
    if limit is not None:
        x, y = x[:limit], y[:limit]
    return x, y


def fit_gmm_from_labels(images, labels, ridge: float = 1e-3, num_classes: int | None = None) -> GmmBelief:
    """One Gaussian component per class: empirical mean, ``cov + ridge * I``, frequency weight.

    Covariances are maximum-likelihood (divided by the class count), so a
    class with a single sample gets ``ridge * I``.
    """
    x = np.asarray(images, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValidationError("images must be (N, n) with one label per row")
    if ridge < 0:
        raise ValidationError("ridge must be nonnegative")
    c = int(y.max()) + 1 if num_classes is None else int(num_classes)
    n = x.shape[1]
    weights, means, covs = np.empty(c), np.empty((c, n)), np.empty((c, n, n))
    for k in range(c):
        rows = x[y == k]
        if rows.shape[0] == 0:
            raise ValidationError(f"class {k} has no samples")
        weights[k] = rows.shape[0] / x.shape[0]
        mu = rows.mean(axis=0)
        d = rows - mu
        cov = d.T @ d / rows.shape[0] + ridge * np.eye(n)
        means[k], covs[k] = mu, 0.5 * (cov + cov.T)
    return GmmBelief(weights / weights.sum(), means, covs)


def load_csv_series(path) -> np.ndarray:
    """Rectangular numeric CSV as an ``(rows, columns)`` array.

    A first line containing a non-numeric field is taken as a header.
    Ragged or non-numeric data rows raise :class:`DataError` with the line
    number.
    """
    path = os.fspath(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read file: {exc.strerror}", path=path) from exc
    rows, width = [], None
    with fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                vals = [float(f) for f in rec]
            except ValueError:
                if lineno == 1:
                    continue
                raise DataError(f"non-numeric field on line {lineno}", path=path) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataError(f"line {lineno} has {len(vals)} fields, expected {width}", path=path)
            rows.append(vals)
    if not rows:
        raise DataError("no numeric rows", path=path)
    return np.array(rows)


def fit_gaussian(rows, ridge: float = 1e-3) -> GaussianBelief:
    """Empirical mean and maximum-likelihood covariance plus ``ridge * I``."""
    x = np.atleast_2d(np.asarray(rows, dtype=float))
    if ridge < 0:
        raise ValidationError("ridge must be nonnegative")
    mu = x.mean(axis=0)
    d = x - mu
    cov = d.T @ d / x.shape[0] + ridge * np.eye(x.shape[1])
    return GaussianBelief(mu, 0.5 * (cov + cov.T))

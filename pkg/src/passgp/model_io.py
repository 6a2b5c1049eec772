"""Model persistence: versioned text header plus raw little-endian blocks.

The header is line-oriented ``key=value`` text (floats as repr, so they
round-trip exactly); vector payloads follow a ``blob`` marker as
contiguous little-endian arrays in header-declared order. The sha256 of
the payload is stored in the header and verified on load. Reloading a
model reproduces its predictions bit for bit: site parameters and active
features are stored losslessly and the posterior is recomputed by the
same routine that produced it.
"""

import hashlib
import io

import numpy as np

from .active_set import ActiveSetModel, Mode, PassConfig
from .ep import rebuild_state
from .errors import ParseError
from .kernels import KernelFamily, KernelSpec, kernel_matrix

MAGIC = "passgp-model v1"
_BLOB_MARKER = b"blob\n"

_DTYPES = {"float64": "<f8", "int64": "<i8"}

_CONFIG_FIELDS = (
    ("mode", lambda v: Mode(v), lambda v: v.value),
    ("n_init", int, str),
    ("n_sub", int, str),
    ("n_pass", int, str),
    ("p_inc", float, repr),
    ("p_del", float, repr),
    ("m_budget", int, str),
    ("p_exc", float, repr),
    ("hyperopt_every", int, str),
    ("seed", int, str),
)


def save_model(model, path):
    """Write an ActiveSetModel; see module docstring for the format."""
    arrays = [
        ("active_idx", model.active_idx.astype("<i8")),
        ("y_active", np.asarray(model.y_active).astype("<i8")),
        ("X_active", np.ascontiguousarray(model.X_active, dtype="<f8").ravel()),
        ("site_mean", model.ep_state.site_mean.astype("<f8")),
        ("site_var", model.ep_state.site_var.astype("<f8")),
    ]
    payload = b"".join(a.tobytes() for _, a in arrays)

    lines = [MAGIC]
    lines.append(f"kernel_family={model.kernel.family.value}")
    lines.append("log_theta=" + ",".join(repr(v) for v in model.kernel.log_theta))
    lines.append(f"degree={model.kernel.degree}")
    lines.append(f"n_active={model.active_size}")
    lines.append(f"n_features={model.X_active.shape[1]}")
    if model.target_class is not None:
        lines.append(f"target_class={model.target_class}")
    for key, _, enc in _CONFIG_FIELDS:
        lines.append(f"config.{key}={enc(getattr(model.config, key))}")
    for name, arr in arrays:
        kind = "int64" if arr.dtype.kind == "i" else "float64"
        lines.append(f"array={name}:{kind}:{arr.size}")
    lines.append(f"checksum={hashlib.sha256(payload).hexdigest()}")
    header = ("\n".join(lines) + "\n").encode()

    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(_BLOB_MARKER)
        fh.write(payload)


def load_model(path):
    """Read a model file back into a fully usable ActiveSetModel."""
    with open(path, "rb") as fh:
        content = fh.read()
    if _BLOB_MARKER not in content:
        raise ParseError(f"{path}: missing payload marker")
    header_bytes, payload = content.split(_BLOB_MARKER, 1)
    header_lines = header_bytes.decode().splitlines()
    if not header_lines or header_lines[0] != MAGIC:
        raise ParseError(f"{path}: not a {MAGIC} file")

    fields = {}
    array_decls = []
    for line in header_lines[1:]:
        if not line:
            continue
        key, _, value = line.partition("=")
        if key == "array":
            name, kind, count = value.split(":")
            array_decls.append((name, kind, int(count)))
        else:
            fields[key] = value

    digest = hashlib.sha256(payload).hexdigest()
    if digest != fields.get("checksum"):
        raise ParseError(f"{path}: checksum mismatch (corrupt payload)")

    arrays = {}
    buf = io.BytesIO(payload)
    for name, kind, count in array_decls:
        dtype = np.dtype(_DTYPES[kind])
        raw = buf.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise ParseError(f"{path}: truncated array block {name}")
        arrays[name] = np.frombuffer(raw, dtype=dtype).copy()
    if buf.read(1):
        raise ParseError(f"{path}: trailing bytes after declared arrays")

    log_theta = tuple(float(v) for v in fields["log_theta"].split(","))
    kernel = KernelSpec(
        KernelFamily(fields["kernel_family"]), log_theta, int(fields["degree"])
    )
    n_active = int(fields["n_active"])
    n_features = int(fields["n_features"])
    X_active = arrays["X_active"].reshape(n_active, n_features)
    y_active = arrays["y_active"]

    kwargs = {}
    for key, dec, _ in _CONFIG_FIELDS:
        raw = fields.get(f"config.{key}")
        if raw is not None:
            kwargs[key] = dec(raw)
    config = PassConfig(**kwargs)

    K = kernel_matrix(kernel, X_active, symmetric=True)
    state = rebuild_state(K, y_active, arrays["site_mean"], arrays["site_var"])
    target = fields.get("target_class")
    return ActiveSetModel(
        active_idx=arrays["active_idx"],
        ep_state=state,
        kernel=kernel,
        config=config,
        history=[],
        X_active=X_active,
        y_active=y_active,
        target_class=int(target) if target is not None else None,
    )

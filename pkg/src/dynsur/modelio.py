"""Versioned JSON serialization of fitted surrogates."""

from __future__ import annotations

import json

from .errors import ConfigError
from .features import PcaMap
from .narx import FittedStage, FittedSurrogate, spec_from_dict
from .regression import SparseModel

SCHEMA = "dynsur-model/1"


def surrogate_to_dict(model: FittedSurrogate) -> dict:
    return {
        "schema": SCHEMA,
        "kind": model.kind,
        "grid_dt": model.grid_dt,
        "stages": [
            {
                "spec": st.spec.to_dict(),
                "model": st.model.to_dict(),
                "pca_maps": {k: v.to_dict() for k, v in st.pca_maps.items()}
                if st.pca_maps is not None
                else None,
                "max_train_abs": st.max_train_abs,
            }
            for st in model.stages
        ],
        "diagnostics": {
            k: v
            for k, v in model.diagnostics.items()
            if isinstance(v, (int, float, str, bool, list))
        },
    }


def surrogate_from_dict(d: dict) -> FittedSurrogate:
    if d.get("schema") != SCHEMA:
        raise ConfigError(f"unsupported model schema: {d.get('schema')!r}")
    stages = [
        FittedStage(
            spec=spec_from_dict(st["spec"]),
            model=SparseModel.from_dict(st["model"]),
            pca_maps={k: PcaMap.from_dict(v) for k, v in st["pca_maps"].items()}
            if st["pca_maps"] is not None
            else None,
            max_train_abs=float(st["max_train_abs"]),
        )
        for st in d["stages"]
    ]
    return FittedSurrogate(
        kind=d["kind"],
        stages=stages,
        grid_dt=float(d["grid_dt"]),
        diagnostics=dict(d.get("diagnostics", {})),
    )


def save_surrogate(model: FittedSurrogate, path) -> None:
    with open(path, "w") as fh:
        json.dump(surrogate_to_dict(model), fh, indent=1)


def load_surrogate(path) -> FittedSurrogate:
    with open(path) as fh:
        return surrogate_from_dict(json.load(fh))

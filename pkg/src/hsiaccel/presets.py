"""Benchmark dataset presets and their tuned network configurations."""

from __future__ import annotations

from dataclasses import dataclass

from .model import NetParams, NetworkSpec, derive_config


@dataclass(frozen=True)
class DatasetPreset:
    name: str
    n_classes: int
    n_c: int
    block1_kernel: str
    n_b: int
    p: int

    def net_params(self) -> NetParams:
        return NetParams(n_b=self.n_b, p=self.p, block1_kernel=self.block1_kernel)

    def spec(self) -> NetworkSpec:
        return derive_config(self.n_c, self.n_classes, self.net_params())


PRESETS: dict[str, DatasetPreset] = {
    "indian-pines": DatasetPreset("indian-pines", 11, 220, "1x1", 4, 3),
    "salinas": DatasetPreset("salinas", 16, 224, "1x1", 8, 3),
    "ksc": DatasetPreset("ksc", 13, 176, "3x3", 8, 5),
    "botswana": DatasetPreset("botswana", 14, 144, "3x3", 8, 5),
}


def get_preset(name: str) -> DatasetPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}"
        ) from None

"""Declared network hyperparameters.

Both networks share the same shape: one sub-network per scale, each a
chain of convolution groups (conv -> batch norm -> leaky ReLU) capped by a
1x1 convolution and a sigmoid. Sub-networks beyond the coarsest
additionally ingest the upscaled mask predicted at the previous scale.
Everything configurable lives here, not in the network code, and the
values are embedded in every checkpoint.
"""

import json
from dataclasses import dataclass, asdict

INIT_KIND = "init"
PROP_KIND = "propagation"
NETWORK_KINDS = (INIT_KIND, PROP_KIND)


@dataclass(frozen=True)
class SubNetSpec:
    """One scale's sub-network, derived from the owning Architecture."""

    io_size: int
    in_channels: int
    conv_channels: tuple
    filter_size: int
    out_channels: int
    takes_coarse_mask: bool

    @property
    def prefix(self):
        return f"s{self.io_size}"


@dataclass(frozen=True)
class Architecture:
    kind: str
    input_channels: int
    scales: tuple
    head_channels: int
    conv_channels: tuple = (16, 32, 32, 16)
    filter_size: int = 3
    leaky_slope: float = 0.25
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9

    def __post_init__(self):
        if self.kind not in NETWORK_KINDS:
            raise ValueError(f"kind must be one of {NETWORK_KINDS}, got {self.kind!r}")
        if len(self.scales) < 2 or any(
            b != 2 * a for a, b in zip(self.scales, self.scales[1:])
        ):
            raise ValueError(f"scales must double at each step, got {self.scales}")
        if self.filter_size % 2 != 1:
            raise ValueError("filter_size must be odd so convolutions preserve extent")

    @property
    def io_size(self):
        return self.scales[-1]

    def subnets(self):
        specs = []
        for i, s in enumerate(self.scales):
            coarse = i > 0
            specs.append(
                SubNetSpec(
                    io_size=s,
                    in_channels=self.input_channels + (self.head_channels if coarse else 0),
                    conv_channels=tuple(self.conv_channels),
                    filter_size=self.filter_size,
                    out_channels=self.head_channels,
                    takes_coarse_mask=coarse,
                )
            )
        return specs

    def to_json(self):
        d = asdict(self)
        d["scales"] = list(self.scales)
        d["conv_channels"] = list(self.conv_channels)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["scales"] = tuple(d["scales"])
        d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)


def default_architecture(kind):
    if kind == INIT_KIND:
        return Architecture(kind=INIT_KIND, input_channels=1, scales=(32, 64, 128),
                            head_channels=1)
    if kind == PROP_KIND:
        return Architecture(kind=PROP_KIND, input_channels=6, scales=(64, 128),
                            head_channels=4)
    raise ValueError(f"kind must be one of {NETWORK_KINDS}, got {kind!r}")

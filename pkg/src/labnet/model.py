"""Full network assembly: two branches over a shared stem, with channel
and spatial attention inside each branch, joined by a residual head.

Dataflow (two-branch mode, 32-channel branch width):

    I0 = concat[stem(shadow), mask]                      4 channels
    I1_b = BB1_b(I0)                                     per branch b
    I2_b = BB2_b(J1_b(concat[I1_b, I1_other]))
    I3_b = BB3_b(LSA1_b(J2_b(concat[I2_b, I2_other])))
    I4_b = BB4_b(LSA2_b(J3_b(concat[I3_b, I3_other])))   2 ch (ab) / 1 ch (l)
    out  = head(concat[I4_ab, I4_l] + shadow)

Each basic block is an elementary unit (3 stages of parallel dilated
convs), channel attention over the 96-channel stage concat, then a 1x1
projection back to branch width (or to the branch's output width in the
fourth block). The single-branch ablation replaces the pair with one
branch projecting straight to 3 channels; its junction convs keep the
depth but read 32 channels instead of 64.

Parameters live in a flat, ordered, name-addressed registry so training,
checkpoints, and the complexity report all walk the same list.
"""
import json
import struct

import numpy as np

from . import autodiff as ad
from .blocks import (ECA_MODES, ECAParams, ElementaryUnitConfig,
                     ElementaryUnitWeights, LSAParams, StageWeights, eca,
                     elementary_unit, lsa)
from .errors import ArgumentError, ConfigError, ShapeError

BRANCH_MODES = ("two", "single")
LSA_MODES = ("local", "whole", "off")

CHECKPOINT_MAGIC = b"LABN"
CHECKPOINT_VERSION = 1


class ModelConfig:
    """Everything needed to rebuild the network skeleton.

    The ablation switches (eca_mode, lsa_mode, branch_mode, stage channel
    permutation) default to the shipped configuration.
    """

    __slots__ = ("rates", "stage_channels", "merge_channels", "eca_ratio",
                 "eca_mode", "lsa_k", "lsa_m", "lsa_dilate", "lsa_mode",
                 "lsa_downsample", "branch_mode")

    def __init__(self, rates=((1, 4, 16), (2, 8, 32), (4, 16, 64)),
                 stage_channels=(16, 32, 48), merge_channels=32,
                 eca_ratio=4, eca_mode="laplacian",
                 lsa_k=32, lsa_m=256, lsa_dilate=7, lsa_mode="local",
                 lsa_downsample=True, branch_mode="two"):
        if branch_mode not in BRANCH_MODES:
            raise ArgumentError(f"branch_mode must be one of {BRANCH_MODES}")
        if lsa_mode not in LSA_MODES:
            raise ArgumentError(f"lsa_mode must be one of {LSA_MODES}")
        if eca_mode not in ECA_MODES:
            raise ArgumentError(f"eca_mode must be one of {ECA_MODES}")
        self.rates = tuple(tuple(int(d) for d in r) for r in rates)
        self.stage_channels = tuple(int(c) for c in stage_channels)
        self.merge_channels = int(merge_channels)
        self.eca_ratio = int(eca_ratio)
        self.eca_mode = eca_mode
        self.lsa_k = int(lsa_k)
        self.lsa_m = int(lsa_m)
        self.lsa_dilate = int(lsa_dilate)
        self.lsa_mode = lsa_mode
        self.lsa_downsample = bool(lsa_downsample)
        self.branch_mode = branch_mode
        self.unit_config()  # validate rate/channel pairing early

    def unit_config(self):
        return ElementaryUnitConfig(self.rates, self.stage_channels,
                                    self.merge_channels)

    def branches(self):
        """(name, output_channels) per branch, in concat order."""
        if self.branch_mode == "two":
            return (("ab", 2), ("l", 1))
        return (("main", 3),)

    def to_dict(self):
        return {
            "rates": [list(r) for r in self.rates],
            "stage_channels": list(self.stage_channels),
            "merge_channels": self.merge_channels,
            "eca_ratio": self.eca_ratio,
            "eca_mode": self.eca_mode,
            "lsa_k": self.lsa_k,
            "lsa_m": self.lsa_m,
            "lsa_dilate": self.lsa_dilate,
            "lsa_mode": self.lsa_mode,
            "lsa_downsample": self.lsa_downsample,
            "branch_mode": self.branch_mode,
        }

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in d}
        try:
            return cls(**known)
        except TypeError as exc:
            raise ConfigError(f"bad model config: {exc}") from None


class BasicBlockParams:
    __slots__ = ("unit", "eca", "proj")

    def __init__(self, unit, eca_params, proj):
        self.unit = unit
        self.eca = eca_params
        self.proj = proj


class BranchParams:
    __slots__ = ("bb", "junctions", "lsas")

    def __init__(self, bb, junctions, lsas):
        self.bb = bb              # four BasicBlockParams
        self.junctions = junctions  # three 1x1 ConvWeights
        self.lsas = lsas          # two LSAParams (may be unused when lsa off)


class ModelParams:
    """The parameter registry plus the structured views forward() walks."""

    def __init__(self, config):
        self.config = config
        self.stem = None
        self.branches = {}
        self.head = None
        self._named = []

    def _register(self, name, tensor):
        tensor.requires_grad = True
        tensor.name = name
        self._named.append((name, tensor))

    def named_parameters(self):
        return list(self._named)

    def tensors(self):
        return [t for _, t in self._named]

    def zero_grads(self):
        for t in self.tensors():
            t.grad = None


class _Builder:
    """Creates tensors in a fixed walk order so init is seed-reproducible."""

    def __init__(self, params, rng, dtype):
        self.params = params
        self.rng = rng
        self.dtype = dtype

    def conv(self, name, cout, cin, k, dilation=1):
        fan_in = cin * k * k
        bound = np.sqrt(1.0 / fan_in)
        w = self.rng.uniform(-bound, bound, (cout, cin, k, k)).astype(self.dtype)
        b = np.zeros(cout, dtype=self.dtype)
        cw = ad.ConvWeight(ad.Tensor(w), ad.Tensor(b), dilation)
        self.params._register(f"{name}.weight", cw.weight)
        self.params._register(f"{name}.bias", cw.bias)
        return cw

    def fc(self, name, fan_in, fan_out):
        bound = np.sqrt(1.0 / fan_in)
        w = ad.Tensor(self.rng.uniform(-bound, bound,
                                       (fan_in, fan_out)).astype(self.dtype))
        b = ad.Tensor(np.zeros(fan_out, dtype=self.dtype))
        self.params._register(f"{name}.weight", w)
        self.params._register(f"{name}.bias", b)
        return w, b

    def unit(self, name, cin, cfg):
        stages = []
        cur = cin
        for si, rates in enumerate(cfg.rates):
            convs = [self.conv(f"{name}.stage{si + 1}.conv{ci}", ch, cur, 3, d)
                     for ci, (ch, d) in enumerate(zip(cfg.stage_channels, rates))]
            merge = self.conv(f"{name}.stage{si + 1}.merge",
                              cfg.merge_channels, cfg.concat_channels, 1)
            stages.append(StageWeights(convs, merge))
            cur = cfg.merge_channels
        return ElementaryUnitWeights(stages)

    def basic_block(self, name, cin, out_channels, config):
        cfg = config.unit_config()
        unit = self.unit(f"{name}.unit", cin, cfg)
        c = cfg.unit_channels
        r = max(1, c // config.eca_ratio)
        w1, b1 = self.fc(f"{name}.eca.fc1", c, r)
        w2, b2 = self.fc(f"{name}.eca.fc2", r, c)
        eca_params = ECAParams(w1, b1, w2, b2, mode=config.eca_mode)
        proj = self.conv(f"{name}.proj", out_channels, c, 1)
        return BasicBlockParams(unit, eca_params, proj)

    def lsa(self, name, c, config):
        conv_s = self.conv(f"{name}.conv_s", config.lsa_k, c, 3)
        conv_ns = self.conv(f"{name}.conv_ns", config.lsa_k, c, 3)
        merge = self.conv(f"{name}.merge", c, c + config.lsa_k, 1)
        region = "nonshadow" if config.lsa_mode == "whole" else "boundary"
        return LSAParams(conv_s, conv_ns, merge, m=config.lsa_m,
                         dilate_kernel=config.lsa_dilate, region=region,
                         downsample=config.lsa_downsample)


def init_params(config=None, seed=0, dtype=np.float32):
    """Build the registry: uniform fan-in-scaled conv/FC weights, zero biases.

    The same seed always produces the same registry, entry for entry.
    """
    config = config or ModelConfig()
    params = ModelParams(config)
    b = _Builder(params, np.random.default_rng(seed), dtype)
    width = config.merge_channels
    jin = 2 * width if config.branch_mode == "two" else width

    params.stem = b.conv("stem", 3, 3, 3)
    for name, out_ch in config.branches():
        bb = [b.basic_block(f"{name}.bb1", 4, width, config),
              b.basic_block(f"{name}.bb2", width, width, config)]
        junctions = [b.conv(f"{name}.junction1", width, jin, 1)]
        junctions.append(b.conv(f"{name}.junction2", width, jin, 1))
        lsas = [b.lsa(f"{name}.lsa1", width, config)]
        bb.append(b.basic_block(f"{name}.bb3", width, width, config))
        junctions.append(b.conv(f"{name}.junction3", width, jin, 1))
        lsas.append(b.lsa(f"{name}.lsa2", width, config))
        bb.append(b.basic_block(f"{name}.bb4", width, out_ch, config))
        params.branches[name] = BranchParams(bb, junctions, lsas)
    params.head = b.conv("head", 3, 3, 3)
    return params


# ---------------------------------------------------------------------------
# forward


def _basic_block_forward(x, bbp):
    _, cat = elementary_unit(x, bbp.unit)
    return ad.conv2d(eca(cat, bbp.eca), bbp.proj)


def forward(params, shadow, mask):
    """shadow (n, 3, h, w) normalized LAB planes, mask (n, 1, h, w) binary.

    Returns the predicted shadow-free image, same shape as shadow.
    """
    shadow = shadow if isinstance(shadow, ad.Tensor) else ad.Tensor(shadow)
    mask_np = mask.data if isinstance(mask, ad.Tensor) else np.asarray(mask)
    if shadow.data.ndim != 4 or shadow.data.shape[1] != 3:
        raise ShapeError(f"shadow must be (n, 3, h, w), got {shadow.data.shape}")
    n, _, h, w = shadow.data.shape
    if mask_np.shape != (n, 1, h, w):
        raise ShapeError(f"mask must be {(n, 1, h, w)}, got {mask_np.shape}")
    if h % 4 or w % 4:
        raise ShapeError(f"spatial size must be a multiple of 4, got {h}x{w}")
    if not np.all((mask_np == 0) | (mask_np == 1)):
        raise ArgumentError("mask must be binary (entries 0 or 1)")

    cfg = params.config
    mask_t = ad.Tensor(mask_np.astype(shadow.data.dtype, copy=False))
    i0 = ad.concat_channels([ad.conv2d(shadow, params.stem), mask_t])

    names = [name for name, _ in cfg.branches()]
    cur = {name: _basic_block_forward(i0, params.branches[name].bb[0])
           for name in names}
    for hop in range(3):
        prev = cur
        cur = {}
        for name in names:
            br = params.branches[name]
            if cfg.branch_mode == "two":
                other = names[1 - names.index(name)]
                x = ad.concat_channels([prev[name], prev[other]])
            else:
                x = prev[name]
            x = ad.conv2d(x, br.junctions[hop])
            if hop >= 1 and cfg.lsa_mode != "off":
                x = lsa(x, mask_np, br.lsas[hop - 1])
            cur[name] = _basic_block_forward(x, br.bb[hop + 1])
    joined = ad.concat_channels([cur[name] for name in names]) \
        if len(names) > 1 else cur[names[0]]
    return ad.conv2d(ad.add(joined, shadow), params.head)


# ---------------------------------------------------------------------------
# complexity accounting


class ComplexityReport:
    """Per-module parameter and FLOP breakdown; totals are row sums."""

    def __init__(self, rows, input_hw, convention):
        self.rows = rows  # list of (module, params, flops)
        self.input_hw = input_hw
        self.convention = convention

    @property
    def param_count(self):
        return sum(r[1] for r in self.rows)

    @property
    def flops(self):
        return sum(r[2] for r in self.rows)

    def table(self):
        lines = [f"{'module':<16} {'params':>12} {'flops':>16}"]
        for name, p, f in self.rows:
            lines.append(f"{name:<16} {p:>12,} {f:>16,}")
        lines.append(f"{'total':<16} {self.param_count:>12,} {self.flops:>16,}")
        lines.append(f"(input {self.input_hw[0]}x{self.input_hw[1]}, "
                     f"{self.convention})")
        return "\n".join(lines)


def conv_macs(hw, cout, cin, k):
    return hw[0] * hw[1] * cout * cin * k * k


def count_params(params):
    return sum(t.data.size for t in params.tensors())


def count_flops(params, input_hw, attention_pixels=None):
    """Analytic cost of one forward pass at the given input size.

    Convs and matmuls count 1 MAC = 1 FLOP; elementwise work counts one
    FLOP per element. Attention cost depends on the mask, so it is a
    separate row: 0 unless attention_pixels = (n_shadow, n_keys) is given.
    """
    cfg = params.config
    h, w = input_hw
    if h <= 0 or w <= 0:
        raise ArgumentError(f"input size must be positive, got {input_hw}")
    hw = (h, w)
    ucfg = cfg.unit_config()
    width = cfg.merge_channels
    cat_c = ucfg.concat_channels
    unit_c = ucfg.unit_channels
    r = max(1, unit_c // cfg.eca_ratio)
    jin = 2 * width if cfg.branch_mode == "two" else width
    m = min(cfg.lsa_m, h, w) if cfg.lsa_downsample else min(h, w)
    mhw = (m, m)

    def unit_cost(cin):
        total = 0
        cur = cin
        for rates in cfg.rates:
            total += sum(conv_macs(hw, ch, cur, 3)
                         for ch in cfg.stage_channels)
            total += conv_macs(hw, cfg.merge_channels, cat_c, 1)
            cur = cfg.merge_channels
        return total

    def bb_cost(cin, cout):
        total = unit_cost(cin)
        if cfg.eca_mode != "off":
            total += conv_macs(hw, unit_c, 1, 3)  # fixed stencil, depthwise
            total += 2 * h * w * unit_c           # statistic + gate multiply
            total += unit_c * r + r * unit_c      # the two FC layers
        total += conv_macs(hw, cout, unit_c, 1)
        return total

    def param_of(prefix):
        return sum(t.data.size for name, t in params.named_parameters()
                   if name.startswith(prefix + "."))

    rows = [("stem", param_of("stem"), conv_macs(hw, 3, 3, 3))]
    for name, out_ch in cfg.branches():
        flops = bb_cost(4, width) + bb_cost(width, width) * 2 \
            + bb_cost(width, out_ch)
        flops += 3 * conv_macs(hw, width, jin, 1)
        if cfg.lsa_mode != "off":
            per_lsa = 2 * conv_macs(mhw, cfg.lsa_k, width, 3) \
                + conv_macs(hw, width, width + cfg.lsa_k, 1) \
                + h * w * width + m * m * width  # the two resamples
            flops += 2 * per_lsa
        rows.append((name, param_of(name), flops))
    rows.append(("head", param_of("head"),
                 conv_macs(hw, 3, 3, 3) + 3 * h * w))  # conv + residual add
    att = 0
    if attention_pixels is not None:
        n_s, n_k = attention_pixels
        att = 2 * n_s * n_k * cfg.lsa_k * (2 if cfg.branch_mode == "two" else 1) * 2
    rows.append(("attention", 0, att))
    return ComplexityReport(rows, hw, "1 MAC = 1 FLOP")


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params):
    """Self-describing container: magic, version, JSON manifest, f32 blobs."""
    entries = []
    offset = 0
    blobs = []
    for name, t in params.named_parameters():
        data = np.ascontiguousarray(t.data, dtype="<f4")
        entries.append({"name": name, "shape": list(t.data.shape),
                        "offset": offset})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps({"config": params.config.to_dict(),
                         "tensors": entries}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path, dtype=np.float32):
    """Rebuild a ModelParams whose tensors hold the stored values."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: corrupt checkpoint header ({exc})") from None
    config = ModelConfig.from_dict(header["config"])
    params = init_params(config, seed=0, dtype=dtype)
    blob_start = 12 + hlen
    stored = {e["name"]: e for e in header["tensors"]}
    for name, t in params.named_parameters():
        if name not in stored:
            raise ConfigError(f"{path}: checkpoint is missing tensor {name}")
        e = stored[name]
        shape = tuple(e["shape"])
        if shape != t.data.shape:
            raise ConfigError(
                f"{path}: tensor {name} has shape {shape}, expected {t.data.shape}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = blob_start + e["offset"]
        end = start + 4 * count
        if end > len(raw):
            raise ConfigError(f"{path}: checkpoint truncated at tensor {name}")
        flat = np.frombuffer(raw[start:end], dtype="<f4")
        t.data = flat.reshape(shape).astype(dtype)
    return params

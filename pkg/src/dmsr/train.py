"""Training, inference, evaluation and ablation drivers.

Runs are deterministic given (config, seed, data): initialization draws
from one seeded generator, pairs iterate lexicographically, batches are
assembled by step index, and losses are logged as JSON lines.  A resumed
run reproduces the unbroken run's log exactly because checkpoints carry
raw float64 parameters and Adam moments.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .losses import total_loss
from .network import DeformMambaNet, ModelConfig, preset
from .optim import Adam
from .tensor import ConfigError, NumericError, Tensor

LOG_NAME = "loss_log.jsonl"
FINAL_CKPT = "checkpoint.ckpt"


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=lambda: preset("desk"))
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 2
    iterations: int = 200
    checkpoint_every: int = 50

    def validate(self):
        self.model.validate()
        if self.lr <= 0 or self.batch_size < 1 or self.iterations < 1:
            raise ConfigError("lr, batch_size and iterations must be "
                              "positive")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        """Build from a (possibly partial) dict; unknown keys are errors.

        Model keys the dict omits keep the desk preset's values, so a
        hand-written config stays desk-sized unless it says otherwise.
        """
        d = dict(d)
        model = d.pop("model", {})
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(model, dict):
            bad = set(model) - set(ModelConfig.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown model config keys: {sorted(bad)}")
            for key in ("channels", "mvc_dilations"):
                if key in model:
                    model[key] = tuple(model[key])
            model = replace(preset("desk"), **model)
        return cls(model=model, **d)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls.from_dict(json.loads(text))


def build_model(cfg: ModelConfig, seed: int) -> DeformMambaNet:
    return DeformMambaNet(cfg, seed=seed)


def _model_from_checkpoint(ck: dict) -> DeformMambaNet:
    cfg = TrainConfig.from_dict(ck["config"]["train"])
    net = build_model(cfg.model, seed=int(ck["config"].get("seed", 0)))
    params = dict(net.named_parameters())
    if set(params) != set(ck["params"]):
        raise ConfigError("checkpoint parameter tree does not match the "
                          "configured architecture")
    for name, arr in ck["params"].items():
        if params[name].data.shape != arr.shape:
            raise ConfigError(f"checkpoint shape mismatch for '{name}'")
        params[name].data = arr
    return net


def train(cfg: TrainConfig, data_dir, out_dir, seed: int = 0,
          resume=None) -> dict:
    """Fit on every pair in ``data_dir``; returns a small run summary."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = data_mod.iterate_pairs(data_dir, cfg.model.scale,
                                   cfg.model.hr_divisor)
    net = build_model(cfg.model, seed)
    params = dict(net.named_parameters())
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
               eps=cfg.eps)
    start = 0
    if resume is not None:
        ck = load_checkpoint(resume)
        for name, arr in ck["params"].items():
            params[name].data = arr
        if ck["adam"] is not None:
            opt.load_state_arrays(ck["adam"])
        start = ck["step"]

    snapshot = {"train": cfg.to_dict(), "seed": int(seed)}
    log_path = out / LOG_NAME
    first_total = last_total = None
    with open(log_path, "a" if resume else "w") as log:
        for step in range(start, cfg.iterations):
            T.reset_tape()
            batch = [pairs[(step * cfg.batch_size + j) % len(pairs)]
                     for j in range(cfg.batch_size)]
            tot = l1v = edv = None
            for pair in batch:
                sr = net(pair.lr)
                t_, l_, e_ = total_loss(sr, pair.hr,
                                        beta=_beta(cfg.model),
                                        normalize_celoss=
                                        cfg.model.normalize_celoss)
                tot = t_ if tot is None else tot + t_
                l1v = l_ if l1v is None else l1v + l_
                edv = e_ if edv is None else edv + e_
            tot = tot / cfg.batch_size
            record = {"step": step, "l1": l1v.item() / cfg.batch_size,
                      "celoss": edv.item() / cfg.batch_size,
                      "total": tot.item()}
            if not np.isfinite(record["total"]):
                log.write(json.dumps(record) + "\n")
                raise NumericError(
                    f"non-finite loss at step {step}; the last checkpoint "
                    f"in {out} is retained")
            T.backward(tot)
            opt.step()
            opt.zero_grad()
            log.write(json.dumps(record) + "\n")
            if first_total is None:
                first_total = record["total"]
            last_total = record["total"]
            done = step + 1
            if done % cfg.checkpoint_every == 0 or done == cfg.iterations:
                _save(out / f"checkpoint_{done:06d}.ckpt", params, done,
                      snapshot, opt)
        _save(out / FINAL_CKPT, params, cfg.iterations, snapshot, opt)
    return {"log": str(log_path), "checkpoint": str(out / FINAL_CKPT),
            "first_total": first_total, "last_total": last_total,
            "steps": cfg.iterations - start, "pairs": len(pairs)}


def _beta(model: ModelConfig) -> float:
    return model.celoss_weight if model.use_celoss else 0.0


def _save(path, params, step, snapshot, opt):
    save_checkpoint(path, {k: p.data for k, p in params.items()},
                    step=step, config=snapshot,
                    adam_state=opt.state_arrays())


def infer(ckpt_path, image_path, out_dir, bit_depth: int = 16) -> dict:
    """Super-resolve one low-resolution image with a trained checkpoint."""
    ck = load_checkpoint(ckpt_path)
    net = _model_from_checkpoint(ck)
    lr = Tensor(data_mod.load_image(image_path)[None])
    with T.no_grad():
        sr = net(lr)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dest = out / f"{Path(image_path).stem}_sr.png"
    data_mod.save_image(dest, np.clip(sr.data[0], 0.0, 1.0), bit_depth)
    return {"output": str(dest), "sr": sr.data[0],
            "scale": net.cfg.scale}


def evaluate(ckpt_path, data_dir, out_dir) -> dict:
    """PSNR/SSIM per image plus error maps and an aligned text table."""
    ck = load_checkpoint(ckpt_path)
    net = _model_from_checkpoint(ck)
    pairs = data_mod.iterate_pairs(data_dir, net.cfg.scale,
                                   net.cfg.hr_divisor)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for pair in pairs:
        with T.no_grad():
            sr = np.clip(net(pair.lr).data[0], 0.0, 1.0)
        hr = pair.hr.data[0]
        rows.append({"id": pair.ident,
                     "psnr_db": metrics_mod.psnr(sr, hr),
                     "ssim": metrics_mod.ssim(sr, hr)})
        data_mod.save_image(out / f"error_{pair.ident}.png",
                            metrics_mod.error_map(sr, hr), bit_depth=8)
    with open(out / "metrics.jsonl", "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    summary = {"psnr_db": float(np.mean([r["psnr_db"] for r in rows])),
               "ssim": float(np.mean([r["ssim"] for r in rows])),
               "count": len(rows)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    (out / "table.txt").write_text(_format_table(rows, summary))
    return {"rows": rows, "summary": summary, "out": str(out)}


def _format_table(rows, summary) -> str:
    width = max([len(r["id"]) for r in rows] + [len("image"), len("mean")])
    lines = [f"{'image':<{width}}  {'psnr_db':>8}  {'ssim':>6}"]
    for r in rows:
        lines.append(f"{r['id']:<{width}}  {r['psnr_db']:>8.2f}  "
                     f"{r['ssim']:>6.4f}")
    lines.append(f"{'mean':<{width}}  {summary['psnr_db']:>8.2f}  "
                 f"{summary['ssim']:>6.4f}")
    return "\n".join(lines) + "\n"


ABLATION_VARIANTS = (
    ("w/o Deform", {"use_deform": False}),
    ("w/o MVC", {"use_mvc": False}),
    ("w/o CELoss", {"use_celoss": False}),
    ("Deform-Mamba", {}),
)


def ablate(cfg: TrainConfig, data_dir, out_dir, seed: int = 0) -> list:
    """Train/evaluate the ablation grid under one seed; returns the rows."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, overrides in ABLATION_VARIANTS:
        slug = label.lower().replace("/", "").replace(" ", "_")
        variant = replace(cfg, model=replace(cfg.model, **overrides))
        run_dir = out / slug
        train(variant, data_dir, run_dir, seed=seed)
        report = evaluate(run_dir / FINAL_CKPT, data_dir, run_dir / "eval")
        net = build_model(variant.model, seed)
        rows.append({"model": label,
                     "params": net.parameter_count(),
                     "psnr_db": report["summary"]["psnr_db"],
                     "ssim": report["summary"]["ssim"]})
    (out / "ablation.json").write_text(json.dumps(rows, indent=2))
    width = max(len(r["model"]) for r in rows)
    lines = [f"{'model':<{width}}  {'params':>8}  {'psnr_db':>8}  "
             f"{'ssim':>6}"]
    for r in rows:
        lines.append(f"{r['model']:<{width}}  {r['params']:>8d}  "
                     f"{r['psnr_db']:>8.2f}  {r['ssim']:>6.4f}")
    (out / "ablation_table.txt").write_text("\n".join(lines) + "\n")
    return rows

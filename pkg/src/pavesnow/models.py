"""Pre-trained VGG-19 / ResNet-50 backbones with a fresh 2-class head.

Only the final affine layer is replaced and trained; every other parameter
(and buffer) stays frozen and the whole stack runs in inference mode, so
feature extraction is deterministic and the frozen checksum is stable across
a training run.

Weight sources: ``"imagenet"`` loads the ImageNet-1K pre-training through
torchvision (local cache or download), ``"random"`` builds a seeded randomly
initialized backbone for air-gapped testing, and a filesystem path loads a
torchvision-format state dict.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from pavesnow.dataset import CLASS_ORDER

ARCHS = ("vgg19", "resnet50")
PREDICT_BATCH = 32

HEAD_KEYS = {
    "vgg19": ("classifier.6.weight", "classifier.6.bias"),
    "resnet50": ("fc.weight", "fc.bias"),
}


class ModelError(ValueError):
    pass


class PretrainedWeightsError(ModelError):
    """Pre-trained weights could not be found or fetched."""


@dataclass(frozen=True)
class BackboneSpec:
    arch: str
    num_classes: int = 2
    freeze_features: bool = True
    weights: str = "imagenet"  # "imagenet" | "random" | path to a state-dict file

    def __post_init__(self) -> None:
        if self.arch not in ARCHS:
            raise ModelError(f"unsupported arch {self.arch!r}; supported: {ARCHS}")
        if self.num_classes != 2:
            raise ModelError(f"this toolkit is strictly 2-class, got num_classes={self.num_classes}")

    @property
    def pretrained_on(self) -> str:
        if self.weights == "imagenet":
            return "imagenet_1k"
        if self.weights == "random":
            return "random_init"
        return f"file:{self.weights}"

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "num_classes": self.num_classes,
            "freeze_features": self.freeze_features,
            "weights": self.weights,
            "pretrained_on": self.pretrained_on,
        }


class ClassifierModel:
    """A torch module plus its spec, with the replaced head exposed."""

    def __init__(self, spec: BackboneSpec, module: nn.Module, head_seed: int, build_seed: int):
        self.spec = spec
        self.module = module
        self.head_seed = head_seed
        self.build_seed = build_seed  # seed the backbone was constructed under
        self.class_order = CLASS_ORDER
        self.module.eval()

    @property
    def head(self) -> nn.Linear:
        if self.spec.arch == "vgg19":
            return self.module.classifier[6]
        return self.module.fc

    def head_parameters(self):
        return self.head.parameters()

    def trainable_parameter_names(self) -> list[str]:
        return [name for name, p in self.module.named_parameters() if p.requires_grad]

    def frozen_checksum(self) -> str:
        """Digest over every non-head entry of the state dict, buffers included."""
        head_keys = set(HEAD_KEYS[self.spec.arch])
        digest = hashlib.sha256()
        for key, tensor in sorted(self.module.state_dict().items()):
            if key in head_keys:
                continue
            digest.update(key.encode())
            digest.update(np.ascontiguousarray(tensor.detach().cpu().numpy()).tobytes())
        return digest.hexdigest()


def _construct(arch: str, torchvision_weights):
    import torchvision.models as tvm

    if arch == "vgg19":
        return tvm.vgg19(weights=torchvision_weights)
    return tvm.resnet50(weights=torchvision_weights)


def _imagenet_weights_enum(arch: str):
    import torchvision.models as tvm

    if arch == "vgg19":
        return tvm.VGG19_Weights.IMAGENET1K_V1
    return tvm.ResNet50_Weights.IMAGENET1K_V1


def build_model(spec: BackboneSpec, seed: int = 0) -> ClassifierModel:
    """Build the backbone, load its weights, and replace the final layer.

    The head is a single affine layer initialized with torch's default
    uniform fan-in scheme under ``seed``, so two builds with the same spec
    and seed are identical.
    """
    if spec.weights == "imagenet":
        try:
            module = _construct(spec.arch, _imagenet_weights_enum(spec.arch))
        except Exception as exc:
            raise PretrainedWeightsError(
                f"ImageNet-1K pre-trained weights for arch {spec.arch!r} are unavailable "
                f"(no local cache and download failed): {exc}"
            ) from exc
    elif spec.weights == "random":
        torch.manual_seed(seed)
        module = _construct(spec.arch, None)
    else:
        weights_path = Path(spec.weights)
        if not weights_path.exists():
            raise PretrainedWeightsError(
                f"weights file {weights_path} for arch {spec.arch!r} does not exist"
            )
        module = _construct(spec.arch, None)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        module.load_state_dict(state)

    torch.manual_seed(seed)
    if spec.arch == "vgg19":
        in_features = module.classifier[6].in_features
        module.classifier[6] = nn.Linear(in_features, spec.num_classes)
    else:
        in_features = module.fc.in_features
        module.fc = nn.Linear(in_features, spec.num_classes)

    head_keys = set(HEAD_KEYS[spec.arch])
    for name, param in module.named_parameters():
        param.requires_grad = (name in head_keys) or not spec.freeze_features

    return ClassifierModel(spec=spec, module=module, head_seed=seed, build_seed=seed)


def reinit_head(model: ClassifierModel, seed: int) -> None:
    """Re-draw the head parameters in place with a fresh seed."""
    torch.manual_seed(seed)
    model.head.reset_parameters()
    model.head_seed = seed


def _as_batch_tensor(batch) -> torch.Tensor:
    tensor = torch.as_tensor(np.asarray(batch), dtype=torch.float32)
    if tensor.ndim != 4 or tensor.shape[1] != 3:
        raise ModelError(f"expected a Bx3xHxW batch, got shape {tuple(tensor.shape)}")
    return tensor


def predict_proba(model: ClassifierModel, batch) -> np.ndarray:
    """Class probabilities (softmax over the head logits), rows in CLASS_ORDER."""
    tensor = _as_batch_tensor(batch)
    model.module.eval()
    outputs = []
    with torch.no_grad():
        for start in range(0, tensor.shape[0], PREDICT_BATCH):
            logits = model.module(tensor[start : start + PREDICT_BATCH])
            outputs.append(torch.softmax(logits, dim=1))
    return torch.cat(outputs).numpy()


def extract_features(model: ClassifierModel, batch) -> torch.Tensor:
    """Penultimate features, i.e. the input the replaced head layer sees."""
    tensor = _as_batch_tensor(batch)
    model.module.eval()
    captured: list[torch.Tensor] = []
    hook = model.head.register_forward_hook(
        lambda _module, inputs, _output: captured.append(inputs[0].detach())
    )
    try:
        with torch.no_grad():
            for start in range(0, tensor.shape[0], PREDICT_BATCH):
                model.module(tensor[start : start + PREDICT_BATCH])
    finally:
        hook.remove()
    return torch.cat(captured)


def _atomic_write_bytes(path: Path, write_fn) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_fn(tmp)
    os.replace(tmp, path)


def checkpoint_meta_path(ckpt_path: str | Path) -> Path:
    return Path(ckpt_path).with_suffix(".meta")


def save_checkpoint(model: ClassifierModel, path: str | Path, meta: dict) -> Path:
    """Persist the trained head plus a JSON sidecar; both writes are atomic.

    Since the backbone never changes, the blob stores only the head weights;
    the sidecar records how to rebuild the backbone (arch, weight source,
    build seed) and a digest of its frozen parameters so a drifted rebuild is
    caught at load time. Fully self-contained deployment artifacts are the
    job of the TorchScript export.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sidecar = dict(meta)
    sidecar.update(
        {
            "spec": model.spec.to_dict(),
            "class_order": list(model.class_order),
            "head_seed": model.head_seed,
            "backbone_build_seed": model.build_seed,
            "backbone_digest": model.frozen_checksum(),
        }
    )
    _atomic_write_bytes(path, lambda tmp: torch.save(model.head.state_dict(), tmp))
    meta_path = checkpoint_meta_path(path)
    _atomic_write_bytes(
        meta_path,
        lambda tmp: tmp.write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n"),
    )
    return path


def load_checkpoint(path: str | Path) -> tuple[ClassifierModel, dict]:
    """Rebuild the backbone from its recorded source and load the trained head.

    The rebuilt backbone must reproduce the digest stored at save time;
    a mismatch (missing cache, different library version) is an error, never
    a silently different model.
    """
    path = Path(path)
    meta_path = checkpoint_meta_path(path)
    if not path.exists() or not meta_path.exists():
        raise ModelError(f"checkpoint {path} (or its .meta sidecar) does not exist")
    meta = json.loads(meta_path.read_text())
    spec_dict = meta["spec"]
    spec = BackboneSpec(
        arch=spec_dict["arch"],
        num_classes=spec_dict.get("num_classes", 2),
        freeze_features=spec_dict.get("freeze_features", True),
        weights=spec_dict.get("weights", "random"),
    )
    model = build_model(spec, seed=meta["backbone_build_seed"])
    head_state = torch.load(path, map_location="cpu", weights_only=True)
    model.head.load_state_dict(head_state)
    model.head_seed = meta.get("head_seed", model.head_seed)
    rebuilt_digest = model.frozen_checksum()
    if rebuilt_digest != meta["backbone_digest"]:
        raise ModelError(
            f"rebuilt {spec.arch} backbone does not match the checkpoint "
            f"(digest {rebuilt_digest[:12]} != recorded {meta['backbone_digest'][:12]}); "
            f"the original weight source {spec.weights!r} is required to load it"
        )
    return model, meta


def state_dict_digest(module: nn.Module) -> str:
    """Content digest of a state dict; stable across save/load round-trips."""
    digest = hashlib.sha256()
    for key, tensor in sorted(module.state_dict().items()):
        digest.update(key.encode())
        digest.update(np.ascontiguousarray(tensor.detach().cpu().numpy()).tobytes())
    return digest.hexdigest()


def export_torchscript(
    model: ClassifierModel, out_path: str | Path, image_size: tuple[int, int] = (128, 128)
) -> Path:
    """Trace the full network into a TorchScript file loadable from libtorch."""
    import warnings

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    example = torch.zeros(1, 3, image_size[0], image_size[1])
    model.module.eval()
    with warnings.catch_warnings():
        # torch >= 2.13 marks torch.jit deprecated; it is still the format
        # libtorch consumers load, so keep it and quiet the nag
        warnings.simplefilter("ignore", DeprecationWarning)
        with torch.no_grad():
            traced = torch.jit.trace(model.module, example)
        torch.jit.save(traced, str(out_path))
    return out_path

# egogaze/model_ecn.py
"""
EgoCampusNet (ECN) gaze heatmap predictor.

  clip (B,3,T,H,W) --frozen backbone--> S (B,f_D,T',H/p,W/p)
      slice t --> 1x1 proj + ResNeXt blocks + x2 upsampling --> S' (B,96,H/4,W/4)
  query frame (B,3,H,W) --stem + ResNeXt blocks--> I (B,96,H/4,W/4)
  G = cat(S', I) (B,192,H/4,W/4) --decoder (2 x ConvT x2)--> raw (B,H,W)
  out = normalize(blur(softplus(raw)) + lambda * prior)

With backbone "none" the video path is skipped and the decoder sees I alone.

Checkpoint (.egck): b"EGCK" | u32 version | u32 header length | JSON header |
one EGC1 block per state-dict entry, in header order.
"""

__version__ = "1.4.0"  # prior added to the unnormalised blurred map

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from egogaze.app_models import EncoderCfg, ModelConfig
from egogaze.array_io import decode_array, header_size, write_block
from egogaze.backbones import VideoBackbone, normalize_video
from egogaze.gaze_maps import CenterPrior

log = logging.getLogger("egogaze.ecn")

CKPT_MAGIC = b"EGCK"
CKPT_VERSION = 1


@dataclass
class BackboneFeatures:
    features: Optional[torch.Tensor]   # (B, f_D, T', H/p, W/p); None when absent
    patch_stride: int
    temporal_len: int
    feature_dim: int

    @property
    def absent(self) -> bool:
        return self.features is None

    @property
    def n_tokens(self) -> int:
        if self.features is None:
            return 0
        t, h, w = self.features.shape[2:]
        return t * h * w

# ==================== BUILDING BLOCKS ====================

class ResNeXtBlock(nn.Module):
    """Bottleneck residual block with grouped 3x3 convolution."""

    def __init__(self, c_in: int, c_out: int, width: int, cardinality: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(c_in, width, 1, bias=False),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, width, 3, padding=1, groups=cardinality, bias=False),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, c_out, 1, bias=False),
            nn.BatchNorm2d(c_out),
        )
        self.shortcut = nn.Identity() if c_in == c_out else nn.Sequential(
            nn.Conv2d(c_in, c_out, 1, bias=False), nn.BatchNorm2d(c_out))

    def forward(self, x):
        return F.relu(self.body(x) + self.shortcut(x))


def _up2(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose2d(c_in, c_out, kernel_size=4, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
    )


class ImageEncoder(nn.Module):
    """Query frame -> I at H/4 x W/4, trained from scratch."""

    def __init__(self, enc: EncoderCfg):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, enc.stem_channels, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(enc.stem_channels),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        chans = [enc.stem_channels] + [enc.feature_channels] * enc.depth
        self.blocks = nn.Sequential(*[
            ResNeXtBlock(chans[i], chans[i + 1], enc.image_width, enc.cardinality) for i in range(enc.depth)
        ])

    def forward(self, x):
        return self.blocks(self.stem(x))


class SpatioTemporalEncoder(nn.Module):
    """One temporal slice of S -> S' at H/4 x W/4."""

    def __init__(self, feature_dim: int, patch_stride: int, enc: EncoderCfg):
        super().__init__()
        c = enc.feature_channels
        self.proj = nn.Sequential(nn.Conv2d(feature_dim, c, 1, bias=False), nn.BatchNorm2d(c), nn.ReLU(inplace=True))
        self.blocks = nn.Sequential(*[ResNeXtBlock(c, c, enc.st_width, enc.cardinality) for _ in range(enc.depth)])
        n_up = int(round(math.log2(patch_stride // 4)))
        self.up = nn.Sequential(*[_up2(c, c) for _ in range(n_up)])

    def forward(self, s):
        return self.up(self.blocks(self.proj(s)))


class Decoder(nn.Module):
    """G (H/4) -> raw map (H), two x2 transpose-conv stages then a 3x3 head."""

    def __init__(self, c_in: int, c_mid: int, c_last: int):
        super().__init__()
        self.up = nn.Sequential(_up2(c_in, c_mid), _up2(c_mid, c_last))
        self.head = nn.Conv2d(c_last, 1, 3, padding=1)

    def forward(self, g):
        return self.head(self.up(g)).squeeze(1)

# ==================== POST-PROCESSING ====================

def gaussian_kernel1d(sigma: float, truncate: float = 4.0, dtype=torch.float32, device=None) -> torch.Tensor:
    r = int(truncate * sigma + 0.5)
    k = torch.arange(-r, r + 1, dtype=dtype, device=device)
    w = torch.exp(-0.5 * (k / sigma) ** 2)
    return w / w.sum()


def _reflect_index(n: int, r: int, device) -> torch.Tensor:
    # symmetric reflection (edge sample repeated), valid for any r
    idx = torch.arange(-r, n + r, device=device) % (2 * n)
    return torch.where(idx >= n, 2 * n - 1 - idx, idx)


def blur_torch(x: torch.Tensor, sigma: float, truncate: float = 4.0) -> torch.Tensor:
    """Separable Gaussian blur of (B, H, W) maps; matches scipy gaussian_filter(mode='reflect')."""
    if sigma <= 0:
        return x
    w = gaussian_kernel1d(sigma, truncate, x.dtype, x.device)
    r = (len(w) - 1) // 2
    b, h, wd = x.shape
    y = x.index_select(2, _reflect_index(wd, r, x.device)).reshape(b * h, 1, -1)
    y = F.conv1d(y, w.view(1, 1, -1)).reshape(b, h, wd)
    y = y.transpose(1, 2).index_select(2, _reflect_index(h, r, x.device)).reshape(b * wd, 1, -1)
    y = F.conv1d(y, w.view(1, 1, -1)).reshape(b, wd, h).transpose(1, 2)
    return y


def postprocess(raw: torch.Tensor, prior: torch.Tensor, blur_sigma: float, prior_weight: float) -> torch.Tensor:
    """(B, H, W) raw decoder output -> probability maps, each summing to 1."""
    if prior_weight < 0:
        raise ValueError(f"prior weight must be >= 0, got {prior_weight}")
    if prior.shape[-2:] != raw.shape[-2:]:
        raise ValueError(f"prior shape {tuple(prior.shape)} does not match output {tuple(raw.shape[-2:])}")
    # prior enters at its own scale; its share depends on the decoder's output magnitude
    m = blur_torch(F.softplus(raw), blur_sigma) + prior_weight * prior
    return m / m.sum(dim=(1, 2), keepdim=True).clamp_min(1e-30)

# ==================== MODEL ====================

class EgoCampusNet(nn.Module):
    def __init__(self, cfg: ModelConfig, center_prior: Optional[CenterPrior] = None):
        super().__init__()
        self.cfg = cfg
        enc = cfg.encoder
        h, w = cfg.input_size
        if cfg.backbone == "none":
            self.backbone = None
            self.st_encoder = None
            dec_in = enc.feature_channels
        else:
            self.backbone = VideoBackbone(cfg.backbone, pretrained=cfg.pretrained_backbone)
            self.st_encoder = SpatioTemporalEncoder(self.backbone.feature_dim, self.backbone.stride, enc)
            dec_in = 2 * enc.feature_channels
        self.image_encoder = ImageEncoder(enc)
        self.decoder = Decoder(dec_in, enc.feature_channels, enc.decoder_width)
        self.register_buffer("prior", torch.full((h, w), 1.0 / (h * w)))
        self.prior_mean = (w / 2.0, h / 2.0)
        self.prior_cov = None
        if center_prior is not None:
            self.set_center_prior(center_prior)

    def set_center_prior(self, prior: CenterPrior):
        if tuple(prior.shape) != tuple(self.cfg.input_size):
            raise ValueError(f"center prior {prior.shape} does not match input size {tuple(self.cfg.input_size)}")
        self.prior.copy_(torch.as_tensor(prior.grid, dtype=self.prior.dtype))
        self.prior_mean = tuple(float(v) for v in prior.mean)
        self.prior_cov = np.asarray(prior.cov, dtype=np.float64)

    # ---- stages ----

    def extract_video_features(self, clip: torch.Tensor) -> BackboneFeatures:
        """clip: normalised (B, 3, T, H, W)."""
        if self.backbone is None:
            return BackboneFeatures(None, 0, 0, 0)
        if clip.dim() != 5 or clip.shape[1] != 3:
            raise ValueError(f"clip must be (B, 3, T, H, W), got {tuple(clip.shape)}")
        t, h, w = clip.shape[2:]
        if t != self.cfg.clip_len or (h, w) != tuple(self.cfg.input_size):
            raise ValueError(f"clip is {t}x{h}x{w}, model expects "
                             f"{self.cfg.clip_len}x{self.cfg.input_size[0]}x{self.cfg.input_size[1]}")
        feats = self.backbone(clip)
        return BackboneFeatures(feats, self.backbone.stride, feats.shape[2], feats.shape[1])

    def temporal_slice(self, feat: BackboneFeatures, query_index: int) -> int:
        return (query_index * feat.temporal_len) // self.cfg.clip_len

    def encode_spatiotemporal(self, feat: BackboneFeatures, t: Optional[int] = None) -> Optional[torch.Tensor]:
        if feat.absent:
            return None
        if t is None:
            t = feat.temporal_len - 1
        if not 0 <= t < feat.temporal_len:
            raise ValueError(f"temporal index {t} out of range [0, {feat.temporal_len})")
        return self.st_encoder(feat.features[:, :, t])

    def encode_query_image(self, frame: torch.Tensor) -> torch.Tensor:
        """frame: normalised (B, 3, H, W)."""
        if frame.dim() != 4 or tuple(frame.shape[1:]) != (3, *self.cfg.input_size):
            raise ValueError(f"query frame must be (B, 3, {self.cfg.input_size[0]}, {self.cfg.input_size[1]}), "
                             f"got {tuple(frame.shape)}")
        return self.image_encoder(frame)

    def fuse_and_decode(self, st: Optional[torch.Tensor], img: torch.Tensor) -> torch.Tensor:
        if st is None:
            if self.st_encoder is not None:
                raise ValueError("model has a video branch but no spatio-temporal features were given")
            g = img
        else:
            if st.shape[0] != img.shape[0] or st.shape[2:] != img.shape[2:]:
                raise ValueError(f"shape mismatch: S' {tuple(st.shape)} vs I {tuple(img.shape)}")
            g = torch.cat([st, img], dim=1)
        return self.decoder(g)

    def postprocess(self, raw: torch.Tensor) -> torch.Tensor:
        return postprocess(raw, self.prior, self.cfg.post.blur_sigma, self.cfg.post.prior_weight)

    def forward(self, clip: torch.Tensor, query_index: Optional[int] = None) -> torch.Tensor:
        """clip: normalised (B, 3, T, H, W) -> (B, H, W) probability maps."""
        q = self.cfg.clip_len - 1 if query_index is None else query_index
        if not 0 <= q < clip.shape[2]:
            raise ValueError(f"query index {q} out of range for clip of {clip.shape[2]} frames")
        feat = self.extract_video_features(clip)
        st = self.encode_spatiotemporal(feat, self.temporal_slice(feat, q)) if not feat.absent else None
        img = self.encode_query_image(clip[:, :, q])
        return self.postprocess(self.fuse_and_decode(st, img))


def build_model(cfg: ModelConfig, center_prior: Optional[CenterPrior] = None) -> EgoCampusNet:
    model = EgoCampusNet(cfg, center_prior)
    counts = count_parameters(model)
    log.info(f"[ECN] backbone={cfg.backbone} params: trainable={counts['trainable']:,} "
             f"frozen={counts['frozen']:,} total={counts['total']:,}")
    return model


def clip_to_tensor(frames: np.ndarray, device="cpu") -> torch.Tensor:
    """(T, H, W, 3) uint8 -> normalised (1, 3, T, H, W) float tensor."""
    x = torch.as_tensor(np.ascontiguousarray(frames), device=device).permute(3, 0, 1, 2).float()
    return normalize_video(x.unsqueeze(0))


@torch.no_grad()
def predict(clip, model: EgoCampusNet, device="cpu") -> np.ndarray:
    """ClipSample -> (H, W) float64 probability map."""
    model.eval()
    x = clip_to_tensor(clip.frames, device)
    out = model(x, clip.query_index)
    return out[0].double().cpu().numpy()


def count_parameters(model: nn.Module) -> Dict[str, int]:
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    frozen = sum(p.numel() for p in model.parameters() if not p.requires_grad)
    return {"trainable": trainable, "frozen": frozen, "total": trainable + frozen}


def parameter_checksum(module: Optional[nn.Module]) -> str:
    h = hashlib.sha256()
    if module is not None:
        for name, p in module.named_parameters():
            h.update(name.encode("utf-8"))
            h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()

# ==================== CHECKPOINTS ====================

def save_checkpoint(model: EgoCampusNet, path: Path, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    tensors = []
    offset = 0
    blocks = []
    for name, t in state.items():
        arr = t.detach().cpu().numpy().astype(np.float32)
        blocks.append(arr)
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": str(t.dtype).replace("torch.", ""),
                        "offset": offset})
        offset += _block_size(arr)
    header = {
        "model_config": model.cfg.model_dump(mode="json"),
        "center_prior": None if model.prior_cov is None else {
            "mean": list(model.prior_mean), "cov": model.prior_cov.tolist()},
        "tensors": tensors,
        "extra": extra or {},
    }
    hdr = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(hdr)) + hdr)
        for arr in blocks:
            write_block(fh, arr)
    log.info(f"[ECN] checkpoint -> {path} ({len(tensors)} tensors)")
    return path


def _block_size(arr: np.ndarray) -> int:
    return header_size(arr.ndim) + 4 * arr.size


def read_checkpoint_header(path: Path) -> Tuple[dict, bytes, int]:
    buf = Path(path).read_bytes()
    if buf[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not an EGCK checkpoint")
    version, n = struct.unpack_from("<II", buf, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    header = json.loads(buf[12:12 + n].decode("utf-8"))
    return header, buf, 12 + n


def load_checkpoint(path: Path, device="cpu") -> Tuple[EgoCampusNet, dict]:
    header, buf, base = read_checkpoint_header(path)
    cfg = ModelConfig.model_validate(header["model_config"])
    # weights come from the file; skip the zoo download
    model = EgoCampusNet(cfg.model_copy(update={"pretrained_backbone": False}))
    model.cfg = cfg
    state = {}
    ref = model.state_dict()
    for entry in header["tensors"]:
        arr, _ = decode_array(buf, base + entry["offset"])
        if entry["name"] not in ref:
            raise ValueError(f"{path}: unexpected tensor {entry['name']!r}")
        state[entry["name"]] = torch.as_tensor(arr.reshape(entry["shape"])).to(ref[entry["name"]].dtype)
    model.load_state_dict(state)
    cp = header.get("center_prior")
    if cp is not None:
        model.prior_mean = tuple(cp["mean"])
        model.prior_cov = np.asarray(cp["cov"], dtype=np.float64)
    model.to(device)
    return model, header

# egogaze/backbones.py
"""
Frozen video backbones from the pytorchvideo model zoo, classification head
removed. The feature tap is the output of the last residual stage:

    x3d       X3D-M     f_D = 192,  p = 32, T' = T
    slow_r50  Slow-R50  f_D = 2048, p = 32, T' = T

pytorchvideo is imported lazily so the no-video configuration runs without it.
"""

import logging

import torch
from torch import nn

log = logging.getLogger("egogaze.backbone")

_ZOO = "https://dl.fbaipublicfiles.com/pytorchvideo/model_zoo/kinetics"

BACKBONES = {
    # name: (checkpoint, feature_dim, spatial stride, temporal stride)
    "x3d": ("X3D_M.pyth", 192, 32, 1),
    "slow_r50": ("SLOW_8x8_R50.pyth", 2048, 32, 1),
}

VIDEO_MEAN = (0.45, 0.45, 0.45)
VIDEO_STD = (0.225, 0.225, 0.225)


def _build_net(name: str) -> nn.Module:
    try:
        from pytorchvideo.models.resnet import create_resnet
        from pytorchvideo.models.x3d import create_x3d
    except ImportError as e:
        raise ImportError(f"backbone {name!r} needs pytorchvideo (pip install pytorchvideo)") from e
    if name == "x3d":
        return create_x3d(input_clip_length=16, input_crop_size=224, depth_factor=2.2)
    if name == "slow_r50":
        return create_resnet(stem_conv_kernel_size=(1, 7, 7), head_pool_kernel_size=(8, 7, 7), model_depth=50)
    raise ValueError(f"unknown backbone {name!r}")


class VideoBackbone(nn.Module):
    """Frozen feature extractor; always runs in eval mode without autograd."""

    def __init__(self, name: str, pretrained: bool = True):
        super().__init__()
        if name not in BACKBONES:
            raise ValueError(f"unknown backbone {name!r}; choose from {sorted(BACKBONES)}")
        ckpt, self.feature_dim, self.stride, self.temporal_stride = BACKBONES[name]
        self.name = name
        net = _build_net(name)
        if pretrained:
            try:
                state = torch.hub.load_state_dict_from_url(f"{_ZOO}/{ckpt}", map_location="cpu", progress=False)
                net.load_state_dict(state["model_state"])
                log.info(f"[BACKBONE] {name}: loaded Kinetics weights ({ckpt})")
            except Exception as e:  # offline boxes, proxy errors, cache corruption
                log.warning(f"[BACKBONE] {name}: pretrained weights unavailable ({e}); using random init")
        self.blocks = nn.Sequential(*list(net.blocks)[:-1])
        for p in self.blocks.parameters():
            p.requires_grad_(False)
        self.blocks.eval()

    def train(self, mode: bool = True):
        super().train(mode)
        self.blocks.eval()
        return self

    @torch.no_grad()
    def forward(self, clip: torch.Tensor) -> torch.Tensor:
        """(B, 3, T, H, W) normalised clip -> (B, f_D, T', H/p, W/p)."""
        return self.blocks(clip)


def normalize_video(x: torch.Tensor) -> torch.Tensor:
    """uint8-range (..., 3, ...) tensor with channels on dim 1 -> backbone input space."""
    shape = [1, 3] + [1] * (x.dim() - 2)
    mean = torch.tensor(VIDEO_MEAN, dtype=x.dtype, device=x.device).view(shape)
    std = torch.tensor(VIDEO_STD, dtype=x.dtype, device=x.device).view(shape)
    return (x / 255.0 - mean) / std

"""Encoder, twin projection heads, and the momentum branch.

One encoder feeds two projection heads: `proj_infomin` embeds the content
views and `proj_shuffle` embeds the patch-shuffle views, both into a
128-dimensional unit sphere.  The momentum branch mirrors the whole bundle
and is updated only by an exponential moving average of the query
parameters, never by gradients.
"""

import copy

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


class BasicBlock(nn.Module):
    def __init__(self, c_in, c_out, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(c_out)
        if stride != 1 or c_in != c_out:
            self.shortcut = nn.Sequential(
                nn.Conv2d(c_in, c_out, 1, stride, bias=False),
                nn.BatchNorm2d(c_out))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class SmallResNet(nn.Module):
    """Three-stage residual CNN with global average pooling.

    Resolution-agnostic: the adaptive pooling makes the output dimension
    (4 * width) independent of the input size, so content views and (smaller)
    mosaic views share the same encoder.

    Pooled features pass through a final BatchNorm1d.  Without it the
    post-ReLU channel means dominate the pooled vector and every image maps
    to nearly the same direction at init, which stalls contrastive training
    at this scale.
    """

    def __init__(self, width=16):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, width, 3, 1, 1, bias=False),
            nn.BatchNorm2d(width), nn.ReLU(inplace=True))
        self.stage1 = nn.Sequential(BasicBlock(width, width, 2),
                                    BasicBlock(width, width))
        self.stage2 = nn.Sequential(BasicBlock(width, 2 * width, 2),
                                    BasicBlock(2 * width, 2 * width))
        self.stage3 = nn.Sequential(BasicBlock(2 * width, 4 * width, 2),
                                    BasicBlock(4 * width, 4 * width))
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.feature_norm = nn.BatchNorm1d(4 * width)
        self.feature_dim = 4 * width

    def forward(self, x):
        x = self.stem(x)
        x = self.stage1(x)
        x = self.stage2(x)
        x = self.stage3(x)
        return self.feature_norm(self.pool(x).flatten(1))


def build_encoder(name: str, width: int = 16) -> nn.Module:
    if name == "small":
        return SmallResNet(width=width)
    if name == "resnet50":
        from torchvision.models import resnet50
        net = resnet50(weights=None)
        net.feature_dim = net.fc.in_features
        net.fc = nn.Identity()
        return net
    raise ValueError(f"unknown encoder {name!r}")


class ProjectionHead(nn.Module):
    """Two fully connected layers with one rectification in between."""

    def __init__(self, in_dim, out_dim=128, hidden_dim=None):
        super().__init__()
        hidden_dim = hidden_dim or in_dim
        self.fc1 = nn.Linear(in_dim, hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, out_dim)

    def forward(self, x):
        return self.fc2(F.relu(self.fc1(x)))


class ModelBundle(nn.Module):
    """Query-side encoder plus the two projection heads.

    Both view families pass through the *same* encoder instance (weight
    sharing is by identity, not by copies); only the projection head
    differs per family.
    """

    def __init__(self, encoder: nn.Module, proj_dim=128, proj_hidden=None):
        super().__init__()
        self.encoder = encoder
        dim = encoder.feature_dim
        self.proj_infomin = ProjectionHead(dim, proj_dim, proj_hidden)
        self.proj_shuffle = ProjectionHead(dim, proj_dim, proj_hidden)
        self.proj_dim = proj_dim

    def embed_infomin(self, views):
        return F.normalize(self.proj_infomin(self.encoder(views)), dim=1)

    def embed_shuffle(self, views):
        return F.normalize(self.proj_shuffle(self.encoder(views)), dim=1)


def build_bundle(config) -> ModelBundle:
    """Construct a bundle from a ModelConfig."""
    encoder = build_encoder(config.encoder, config.width)
    hidden = config.proj_hidden or None
    return ModelBundle(encoder, proj_dim=config.proj_dim, proj_hidden=hidden)


class MomentumBundle(nn.Module):
    """EMA mirror of a ModelBundle; parameters never receive gradients."""

    def __init__(self, bundle: ModelBundle, alpha: float):
        super().__init__()
        if not (0.0 <= alpha <= 1.0):
            raise ValueError("momentum coefficient must lie in [0, 1]")
        self.alpha = alpha
        self.encoder = copy.deepcopy(bundle.encoder)
        self.proj_infomin = copy.deepcopy(bundle.proj_infomin)
        self.proj_shuffle = copy.deepcopy(bundle.proj_shuffle)
        for p in self.parameters():
            p.requires_grad_(False)

    @torch.no_grad()
    def embed_infomin(self, views):
        return F.normalize(self.proj_infomin(self.encoder(views)), dim=1)

    @torch.no_grad()
    def embed_shuffle(self, views):
        return F.normalize(self.proj_shuffle(self.encoder(views)), dim=1)


def init_momentum(bundle: ModelBundle, alpha: float = 0.9999) -> MomentumBundle:
    """Start the momentum branch as an exact copy of the query branch."""
    return MomentumBundle(bundle, alpha)


@torch.no_grad()
def momentum_update(mbundle: MomentumBundle, bundle: ModelBundle) -> None:
    """theta_m <- alpha * theta_m + (1 - alpha) * theta_q, elementwise."""
    q_params = list(bundle.parameters())
    m_params = list(mbundle.parameters())
    if len(q_params) != len(m_params):
        raise ValueError("bundle architectures do not match")
    alpha = mbundle.alpha
    for p_m, p_q in zip(m_params, q_params):
        if p_m.shape != p_q.shape:
            raise ValueError(
                f"parameter shape mismatch: {tuple(p_m.shape)} vs {tuple(p_q.shape)}")
        p_m.mul_(alpha).add_(p_q, alpha=1.0 - alpha)


def forward_query(bundle: ModelBundle, v1: torch.Tensor, v3: torch.Tensor):
    """Embed a content view batch and a shuffle view batch; unit-norm rows."""
    return bundle.embed_infomin(v1), bundle.embed_shuffle(v3)


def forward_momentum(mbundle: MomentumBundle, v2: torch.Tensor, v4: torch.Tensor):
    return mbundle.embed_infomin(v2), mbundle.embed_shuffle(v4)


class ClassifierHead(nn.Module):
    """Single linear layer over frozen 128-d projected features."""

    def __init__(self, in_dim=128, n_classes=7):
        super().__init__()
        self.fc = nn.Linear(in_dim, n_classes)
        self.n_classes = n_classes

    def forward(self, features):
        return self.fc(features)


def predict(head: ClassifierHead, features) -> tuple:
    """Argmax prediction with deterministic low-index tie-breaking.

    Returns (labels, scores): integer predictions and softmax class scores.
    """
    if isinstance(features, np.ndarray):
        features = torch.from_numpy(features).float()
    if features.shape[1] != head.fc.in_features:
        raise ValueError(
            f"feature dim {features.shape[1]} != head input {head.fc.in_features}")
    with torch.no_grad():
        logits = head(features).numpy()
    labels = np.argmax(logits, axis=1)   # numpy argmax: first maximum wins
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    scores = exp / exp.sum(axis=1, keepdims=True)
    return labels, scores


def images_to_batch(images, mean, std) -> torch.Tensor:
    """Stack HWC [0,1] float arrays into a normalized NCHW float32 tensor."""
    arr = np.stack([np.asarray(im, dtype=np.float32) for im in images])
    arr = (arr - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()

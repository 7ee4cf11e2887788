"""Latent-diffusion contract with a desk-scale reference implementation.

Everything here is frozen: the codec and denoiser weights never change, the
sampler is a pure function of (condition, steps, seed, weights), and the
training loss is deterministic given its seed.  The loss differentiates with
respect to the conditioning feature so token training can flow gradients
through the text encoder.
"""
from __future__ import annotations

import importlib
import math

import numpy as np
import torch

from .encoders import ConditionVector
from .errors import BadImage, EmptyBatch, UnsupportedBackbone
from .serialization import fingerprint_bytes, f32_bytes

DTYPE = torch.float64


def _as_condition_tensor(condition, dim: int) -> tuple[torch.Tensor, bool]:
    """Coerce a condition to a 1-D tensor; report whether grad should flow."""
    if isinstance(condition, torch.Tensor):
        return condition.reshape(-1).to(DTYPE), True
    if isinstance(condition, ConditionVector):
        values = condition.values
    else:
        values = np.asarray(condition, dtype=np.float64).reshape(-1)
    if values.shape[0] != dim:
        raise ValueError(f"condition dim {values.shape[0]} != expected {dim}")
    return torch.from_numpy(np.ascontiguousarray(values)), False


class ToyLatentCodec:
    """Block-average downsample / nearest-neighbour upsample between 8-bit RGB
    images and latents scaled to roughly [-1, 1].

    Reconstruction is lossy only across pixel blocks; on block-aligned images
    the documented mean absolute pixel error is <= 0.05 (in [0, 1] units).
    """

    def __init__(self, image_size: int = 32, down: int = 2) -> None:
        if image_size % down != 0:
            raise ValueError("image_size must be divisible by the down factor")
        self.image_size = image_size
        self.down = down
        self.latent_shape = (3, image_size // down, image_size // down)

    def encode(self, image: np.ndarray) -> torch.Tensor:
        arr = np.asarray(image)
        if arr.dtype != np.uint8 or arr.shape != (self.image_size, self.image_size, 3):
            raise BadImage(
                f"expected uint8 ({self.image_size}, {self.image_size}, 3), got "
                f"{arr.dtype} {arr.shape}"
            )
        x = arr.astype(np.float64) / 255.0 * 2.0 - 1.0
        d = self.down
        h = self.image_size // d
        pooled = x.reshape(h, d, h, d, 3).mean(axis=(1, 3))  # (h, w, 3)
        return torch.from_numpy(pooled.transpose(2, 0, 1).copy())

    def decode(self, latent: torch.Tensor) -> np.ndarray:
        z = latent.detach().cpu().numpy()
        if z.shape != self.latent_shape:
            raise ValueError(f"latent shape {z.shape} != {self.latent_shape}")
        up = z.repeat(self.down, axis=1).repeat(self.down, axis=2)
        img = (up.transpose(1, 2, 0) + 1.0) / 2.0
        # canonical C order: a decoded image must be byte- and layout-identical
        # to the same image after a PNG round trip
        return np.ascontiguousarray(np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8))


class NoiseSchedule:
    """Linear-beta forward process; index 0 is the clean latent."""

    def __init__(self, num_steps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> None:
        if num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        self.num_steps = num_steps
        betas = torch.linspace(beta_start, beta_end, num_steps, dtype=DTYPE)
        alphas_bar = torch.cumprod(1.0 - betas, dim=0)
        self.betas = betas
        # alphas_bar[0] == 1 exactly so forward(z, 0) returns the clean latent.
        self.alphas_bar = torch.cat([torch.ones(1, dtype=DTYPE), alphas_bar])

    def forward(self, z0: torch.Tensor, t, eta: torch.Tensor) -> torch.Tensor:
        """Noised latent at step t: sqrt(abar_t)·z0 + sqrt(1-abar_t)·eta."""
        t_idx = torch.as_tensor(t, dtype=torch.long)
        abar = self.alphas_bar[t_idx]
        while abar.dim() < z0.dim():
            abar = abar.unsqueeze(-1)
        return torch.sqrt(abar) * z0 + torch.sqrt(1.0 - abar) * eta


class ToyDenoiser(torch.nn.Module):
    """Two-layer conditional noise predictor over flattened latents."""

    def __init__(self, latent_shape: tuple[int, ...], cond_dim: int, num_steps: int,
                 hidden: int = 64, seed: int = 0) -> None:
        super().__init__()
        self.latent_shape = tuple(latent_shape)
        self.cond_dim = cond_dim
        self.num_steps = num_steps
        latent_size = int(np.prod(latent_shape))
        in_dim = latent_size + 3 + cond_dim

        gen = torch.Generator().manual_seed(seed)
        self.w1 = torch.nn.Parameter(
            torch.randn(hidden, in_dim, generator=gen, dtype=DTYPE) / math.sqrt(in_dim)
        )
        self.b1 = torch.nn.Parameter(torch.zeros(hidden, dtype=DTYPE))
        self.w2 = torch.nn.Parameter(
            torch.randn(latent_size, hidden, generator=gen, dtype=DTYPE) / math.sqrt(hidden)
        )
        self.b2 = torch.nn.Parameter(torch.zeros(latent_size, dtype=DTYPE))
        self.requires_grad_(False)

    def forward(self, z_t: torch.Tensor, t: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        batch = z_t.shape[0]
        frac = t.to(DTYPE) / self.num_steps
        t_feats = torch.stack(
            [frac, torch.sin(2 * math.pi * frac), torch.cos(2 * math.pi * frac)], dim=1
        )
        if condition.dim() == 1:
            condition = condition.unsqueeze(0).expand(batch, -1)
        x = torch.cat([z_t.reshape(batch, -1), t_feats, condition], dim=1)
        h = torch.tanh(x @ self.w1.T + self.b1)
        out = h @ self.w2.T + self.b2
        return out.reshape(z_t.shape)


class ToyDiffusionBackbone:
    """Reference latent-diffusion pipeline: codec + schedule + frozen denoiser."""

    kind = "toy"

    def __init__(
        self,
        image_size: int = 32,
        latent_down: int = 2,
        train_steps: int = 1000,
        sample_steps: int = 50,
        cond_dim: int = 32,
        hidden: int = 64,
        seed: int = 0,
        seed_policy: str = "stream-per-call",
    ) -> None:
        self.codec = ToyLatentCodec(image_size=image_size, down=latent_down)
        self.schedule = NoiseSchedule(num_steps=train_steps)
        self.denoiser = ToyDenoiser(
            self.codec.latent_shape, cond_dim, train_steps, hidden=hidden, seed=seed
        )
        self.cond_dim = cond_dim
        self.train_steps = train_steps
        self.sample_steps = sample_steps
        self.seed = seed
        self.seed_policy = seed_policy

    @property
    def latent_shape(self) -> tuple[int, ...]:
        return self.codec.latent_shape

    def encode_batch(self, images) -> torch.Tensor:
        return torch.stack([self.codec.encode(img) for img in images])

    def diffusion_loss(self, images, condition, rng_seed: int):
        """Mean squared error between drawn noise and the denoiser's prediction.

        Timesteps are uniform on {1..T} and noise is standard normal, both from
        a generator seeded with `rng_seed`, so repeated calls with the same seed
        see identical draws.  Returns a torch scalar when `condition` is a
        tensor (gradients flow to it), otherwise a float.
        """
        images = list(images)
        if not images:
            raise EmptyBatch("diffusion loss needs at least one image")
        cond, keep_tensor = _as_condition_tensor(condition, self.cond_dim)

        gen = torch.Generator().manual_seed(int(rng_seed))
        batch = len(images)
        t = torch.randint(1, self.train_steps + 1, (batch,), generator=gen)
        eta = torch.randn((batch, *self.latent_shape), generator=gen, dtype=DTYPE)

        z0 = self.encode_batch(images)
        z_t = self.schedule.forward(z0, t, eta)
        pred = self.denoiser(z_t, t, cond)
        loss = ((eta - pred) ** 2).mean()
        return loss if keep_tensor else float(loss)

    def sample(self, condition, steps: int | None = None, seed: int = 0) -> np.ndarray:
        """Draw one image: seeded initial latent, `steps` reverse updates, decode.

        The reverse update follows the noise-prediction parameterization over a
        strided timestep ladder; all ancestral noise comes from the seeded
        stream, so the output is a pure function of (condition, steps, seed).
        """
        steps = self.sample_steps if steps is None else steps
        if steps < 1 or steps > self.train_steps:
            raise ValueError(f"steps must be in [1, {self.train_steps}]")
        cond, _ = _as_condition_tensor(condition, self.cond_dim)
        if isinstance(condition, torch.Tensor):
            cond = cond.detach()

        gen = torch.Generator().manual_seed(int(seed))
        z = torch.randn(self.latent_shape, generator=gen, dtype=DTYPE)
        ladder = np.unique(np.round(np.linspace(self.train_steps, 0, steps + 1)).astype(int))[::-1]

        abar = self.schedule.alphas_bar
        for t_hi, t_lo in zip(ladder[:-1], ladder[1:]):
            t_batch = torch.tensor([t_hi], dtype=torch.long)
            eps = self.denoiser(z.unsqueeze(0), t_batch, cond).squeeze(0)
            a_hi, a_lo = abar[int(t_hi)], abar[int(t_lo)]
            x0 = (z - torch.sqrt(1.0 - a_hi) * eps) / torch.sqrt(a_hi)
            if t_lo > 0:
                var = (1.0 - a_lo) / (1.0 - a_hi) * (1.0 - a_hi / a_lo)
                sigma = torch.sqrt(torch.clamp(var, min=0.0))
                keep = torch.sqrt(torch.clamp(1.0 - a_lo - sigma**2, min=0.0))
                noise = torch.randn(self.latent_shape, generator=gen, dtype=DTYPE)
                z = torch.sqrt(a_lo) * x0 + keep * eps + sigma * noise
            else:
                z = x0
        return self.codec.decode(z)

    def generate_batch(self, condition, n: int, seed: int = 0) -> list[np.ndarray]:
        """n images from consecutive seeds; element i equals sample(cond, seed+i)."""
        if n < 1:
            raise ValueError("n must be >= 1")
        return [self.sample(condition, seed=seed + i) for i in range(n)]

    def weights_checksum(self) -> str:
        blob = b"".join(
            f32_bytes(p.detach().cpu().numpy()) for p in self.denoiser.parameters()
        )
        blob += f32_bytes(self.schedule.betas.numpy())
        blob += f"{self.codec.image_size}|{self.codec.down}".encode()
        return fingerprint_bytes(blob)

    def fingerprint(self) -> str:
        return fingerprint_bytes(
            f"{self.train_steps}|{self.sample_steps}|{self.cond_dim}|{self.seed}".encode()
            + self.weights_checksum().encode()
        )


def load_diffusion(spec: dict) -> ToyDiffusionBackbone:
    """Instantiate a diffusion backbone from a backbone-spec document.

    Toy specs accept either explicit sizes (image_size, latent_down) or a
    latent_shape triple; T_train/T_sample map to schedule and sampler steps.
    External specs import a factory "module:callable" returning an object with
    the same surface (diffusion_loss / sample / generate_batch / latent_shape).
    """
    kind = spec.get("kind", "toy")
    if kind == "toy":
        params: dict = {}
        if "latent_shape" in spec:
            _, h, w = spec["latent_shape"]
            image_size = int(spec.get("image_size", 32))
            if h != w or image_size % h:
                raise ValueError("latent_shape must be square and divide image_size")
            params["image_size"] = image_size
            params["latent_down"] = image_size // h
        for key_in, key_out in (
            ("image_size", "image_size"),
            ("latent_down", "latent_down"),
            ("T_train", "train_steps"),
            ("T_sample", "sample_steps"),
            ("cond_dim", "cond_dim"),
            ("hidden", "hidden"),
            ("seed", "seed"),
            ("seed_policy", "seed_policy"),
        ):
            if key_in in spec:
                params[key_out] = spec[key_in]
        return ToyDiffusionBackbone(**params)
    if kind == "external":
        factory = spec.get("factory")
        if not factory or ":" not in factory:
            raise UnsupportedBackbone("external diffusion spec needs factory 'module:callable'")
        module_name, attr = factory.split(":", 1)
        fn = getattr(importlib.import_module(module_name), attr)
        return fn(**spec.get("params", {}))
    raise UnsupportedBackbone(f"unknown diffusion kind {kind!r}")

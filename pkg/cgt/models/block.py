"""
Bloque de pronóstico por variable objetivo
Encoder Transformer con máscara de padres, latente gaussiano condicional,
cabeza causal y camino sombra (compuerta + cabezas residuales)
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from cgt.errors import ModelError

_TORCH_DTYPES = {"float32": torch.float32, "float64": torch.float64}

# Inicializacion de las compuertas: sigmoid(logit) = 0.9 en padres, 0.05 en el resto
GATE_INIT_PARENT = 0.9
GATE_INIT_OTHER = 0.05


def torch_dtype(name):
    return _TORCH_DTYPES[name]


def block_seed(seed, target):
    """Semilla derivada e independiente para cada objetivo"""
    return int(np.random.SeedSequence([seed, target]).generate_state(1)[0])


def _logit(p):
    return math.log(p / (1.0 - p))


def sinusoidal_encoding(length, d_model):
    pe = torch.zeros(length, d_model, dtype=torch.float64)
    position = torch.arange(0, length, dtype=torch.float64).unsqueeze(1)
    div_term = torch.exp(
        torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model)
    )
    pe[:, 0::2] = torch.sin(position * div_term)
    pe[:, 1::2] = torch.cos(position * div_term[: d_model // 2])
    return pe


@dataclass
class GaussianPrediction:
    """Parámetros (mu, log v) de una predicción gaussiana, uno por muestra del lote"""

    mu: torch.Tensor
    logvar: torch.Tensor

    def detach(self):
        return GaussianPrediction(self.mu.detach(), self.logvar.detach())


@dataclass
class ForwardOutputs:
    h_c: torch.Tensor
    z: torch.Tensor
    causal: GaussianPrediction
    delta_mu: torch.Tensor
    delta_logvar: torch.Tensor
    aux: GaussianPrediction
    prior_mu: torch.Tensor
    prior_logvar: torch.Tensor
    post_mu: torch.Tensor
    post_logvar: torch.Tensor


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d_model, n_heads):
        super().__init__()
        self.h = n_heads
        self.d_k = d_model // n_heads
        self.w_q = nn.Linear(d_model, d_model)
        self.w_k = nn.Linear(d_model, d_model)
        self.w_v = nn.Linear(d_model, d_model)
        self.w_o = nn.Linear(d_model, d_model)

    def forward(self, x):
        B, W, _ = x.shape
        # (B, W, d_model) -> (B, h, W, d_k)
        query = self.w_q(x).view(B, W, self.h, self.d_k).transpose(1, 2)
        key = self.w_k(x).view(B, W, self.h, self.d_k).transpose(1, 2)
        value = self.w_v(x).view(B, W, self.h, self.d_k).transpose(1, 2)

        scores = (query @ key.transpose(-2, -1)) / math.sqrt(self.d_k)
        attention = scores.softmax(dim=-1)

        out = (attention @ value).transpose(1, 2).contiguous().view(B, W, self.h * self.d_k)
        return self.w_o(out)


class FeedForward(nn.Module):
    def __init__(self, d_model, d_ff):
        super().__init__()
        self.linear_1 = nn.Linear(d_model, d_ff)
        self.linear_2 = nn.Linear(d_ff, d_model)

    def forward(self, x):
        return self.linear_2(torch.relu(self.linear_1(x)))


class EncoderLayer(nn.Module):
    """Capa pre-LayerNorm: x + Attn(LN(x)), luego x + FFN(LN(x))"""

    def __init__(self, d_model, n_heads, d_ff):
        super().__init__()
        self.norm_1 = nn.LayerNorm(d_model)
        self.attention = MultiHeadSelfAttention(d_model, n_heads)
        self.norm_2 = nn.LayerNorm(d_model)
        self.feed_forward = FeedForward(d_model, d_ff)

    def forward(self, x):
        x = x + self.attention(self.norm_1(x))
        return x + self.feed_forward(self.norm_2(x))


class GaussianMLP(nn.Module):
    """Perceptron de dos capas (tanh) con salidas mu y log v"""

    def __init__(self, d_in, d_hidden, d_out):
        super().__init__()
        self.hidden = nn.Linear(d_in, d_hidden)
        self.mu = nn.Linear(d_hidden, d_out)
        self.logvar = nn.Linear(d_hidden, d_out)

    def forward(self, x):
        h = torch.tanh(self.hidden(x))
        return self.mu(h), self.logvar(h)

    def zero_outputs(self):
        for layer in (self.mu, self.logvar):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)


class ForecastBlock(nn.Module):
    """
    Bloque dedicado a un objetivo i con sus propios parámetros
    El trunk se comparte entre el camino causal y el camino sombra del mismo bloque
    """

    def __init__(self, cfg, target, parent_mask, seed=0):
        super().__init__()
        if cfg.D < 1:
            raise ModelError(f"ModelConfig.D debe ser >= 1 (D={cfg.D})")
        if cfg.d_model % cfg.n_heads != 0:
            raise ModelError(f"d_model={cfg.d_model} no es divisible por n_heads={cfg.n_heads}")
        if cfg.logvar_lo >= cfg.logvar_hi:
            raise ModelError("logvar_lo debe ser menor que logvar_hi")
        pi = np.asarray(parent_mask, dtype=np.float64).reshape(-1)
        if pi.shape[0] != cfg.P:
            raise ModelError(f"Mascara de largo {pi.shape[0]}, se esperaba P={cfg.P}")

        self.cfg = cfg
        self.target = target
        d, d_z = cfg.d_model, cfg.d_z

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(block_seed(seed, target))
            self.input_norm = nn.LayerNorm(cfg.P)
            self.projection = nn.Linear(cfg.P, d)
            self.layers = nn.ModuleList(
                [EncoderLayer(d, cfg.n_heads, cfg.d_ff) for _ in range(cfg.n_layers)]
            )
            self.final_norm = nn.LayerNorm(d)
            self.prior_net = GaussianMLP(d, d, d_z)
            self.posterior_net = GaussianMLP(d + 1, d, d_z)
            self.causal_net = GaussianMLP(d + d_z, d, 1)
            self.residual_net = GaussianMLP(d + d_z, d, 1)
            self._init_weights()

        logits = np.where(pi > 0.5, _logit(GATE_INIT_PARENT), _logit(GATE_INIT_OTHER))
        self.gate_logits = nn.Parameter(torch.tensor(logits, dtype=torch.float64))
        self.register_buffer("parent_mask", torch.tensor(pi, dtype=torch.float64))
        if cfg.positional_encoding == "sinusoidal":
            self.register_buffer("positional", sinusoidal_encoding(cfg.W, d), persistent=False)
        else:
            self.positional = None

        self.to(torch_dtype(cfg.dtype))

    def _init_weights(self):
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)
        # las salidas gaussianas arrancan en N(0, 1)
        for net in (self.prior_net, self.posterior_net, self.causal_net, self.residual_net):
            net.zero_outputs()

    # ------------------------------------------------------------------
    # Grupos de parámetros
    # ------------------------------------------------------------------

    def parameter_groups(self):
        trunk = [self.input_norm, self.projection, self.layers, self.final_norm]
        return {
            "trunk": [p for m in trunk for p in m.parameters()],
            "latent": list(self.prior_net.parameters()) + list(self.posterior_net.parameters()),
            "causal_head": list(self.causal_net.parameters()),
            "residual_head": list(self.residual_net.parameters()),
            "gate": [self.gate_logits],
        }

    @property
    def dtype(self):
        return self.gate_logits.dtype

    @property
    def parent_bool(self):
        return self.parent_mask > 0.5

    def gate(self):
        return torch.sigmoid(self.gate_logits)

    def clamp_logvar(self, logvar):
        return torch.clamp(logvar, self.cfg.logvar_lo, self.cfg.logvar_hi)

    def _check_input(self, X):
        expected = (self.cfg.W, self.cfg.P)
        if X.dim() != 3 or tuple(X.shape[1:]) != expected:
            raise ModelError(f"Entrada de forma {tuple(X.shape)}, se esperaba (B, {expected[0]}, {expected[1]})")

    # ------------------------------------------------------------------
    # Camino causal
    # ------------------------------------------------------------------

    def trunk(self, X):
        """LN por token sobre las P columnas, proyección, encoder, último token"""
        h = self.projection(self.input_norm(X))
        if self.positional is not None:
            h = h + self.positional
        for layer in self.layers:
            h = layer(h)
        return self.final_norm(h)[:, -1, :]

    def encode_causal(self, X):
        self._check_input(X)
        # compuerta dura: las columnas no-padre quedan en cero exacto
        masked = torch.where(self.parent_bool, X, torch.zeros((), dtype=X.dtype))
        return self.trunk(masked)

    def latent_prior(self, h_c):
        mu, logvar = self.prior_net(h_c)
        return mu, self.clamp_logvar(logvar)

    def latent_posterior(self, h_c, y):
        mu, logvar = self.posterior_net(torch.cat([h_c, y.unsqueeze(-1)], dim=-1))
        return mu, self.clamp_logvar(logvar)

    @staticmethod
    def sample_latent(mu, logvar, eps):
        return mu + torch.exp(0.5 * logvar) * eps

    def causal_head(self, h_c, z):
        mu, logvar = self.causal_net(torch.cat([h_c, z], dim=-1))
        return GaussianPrediction(mu.squeeze(-1), self.clamp_logvar(logvar.squeeze(-1)))

    # ------------------------------------------------------------------
    # Camino sombra (sin gradiente hacia el trunk, el latente ni la cabeza causal)
    # ------------------------------------------------------------------

    def shadow_forward(self, X, z, causal):
        alpha = self.gate().detach()
        with torch.no_grad():
            h_o = self.trunk(X * alpha)
        u_o = torch.cat([h_o, z.detach()], dim=-1)
        delta_mu, delta_logvar = self.residual_net(u_o)
        delta_mu, delta_logvar = delta_mu.squeeze(-1), delta_logvar.squeeze(-1)
        base = causal.detach()
        aux = GaussianPrediction(
            base.mu + delta_mu, self.clamp_logvar(base.logvar + delta_logvar)
        )
        return delta_mu, delta_logvar, aux

    # ------------------------------------------------------------------
    # Pasadas completas
    # ------------------------------------------------------------------

    def forward_train(self, X, y, eps):
        """Entrenamiento: z se muestrea del posterior q(z | h_c, y)"""
        h_c = self.encode_causal(X)
        prior_mu, prior_logvar = self.latent_prior(h_c)
        post_mu, post_logvar = self.latent_posterior(h_c, y)
        z = self.sample_latent(post_mu, post_logvar, eps)
        causal = self.causal_head(h_c, z)
        delta_mu, delta_logvar, aux = self.shadow_forward(X, z, causal)
        return ForwardOutputs(
            h_c=h_c,
            z=z,
            causal=causal,
            delta_mu=delta_mu,
            delta_logvar=delta_logvar,
            aux=aux,
            prior_mu=prior_mu,
            prior_logvar=prior_logvar,
            post_mu=post_mu,
            post_logvar=post_logvar,
        )

    def forward_infer(self, X, S, generator):
        """Inferencia: S muestras del prior p(z | h_c) que comparten h_c"""
        h_c = self.encode_causal(X)
        mu, logvar = self.latent_prior(h_c)
        predictions = []
        for _ in range(S):
            eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
            z = self.sample_latent(mu, logvar, eps)
            causal = self.causal_head(h_c, z)
            _, _, aux = self.shadow_forward(X, z, causal)
            predictions.append((causal, aux))
        return predictions

    def to_dict(self):
        return {
            "target": self.target,
            "n_parents": int(self.parent_bool.sum().item()),
            "n_parameters": sum(p.numel() for p in self.parameters()),
            "dtype": self.cfg.dtype,
        }

    def __repr__(self):
        return f"<ForecastBlock target={self.target} parents={int(self.parent_bool.sum().item())}>"

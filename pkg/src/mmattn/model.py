"""Multimodal attentive encoder-decoder: parameters and teacher-forced loss."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .attention import AttentionWiring, build_variant
from .corpus import BOS, Batch
from .decoder import Annotations, CgruState, DecoderParams, FusionKind, StepOutput, decode_step, init_state, prepare
from .encoder import GruParams, encode_image, encode_text
from .tensor import ContractError, DimensionError, Tensor


@dataclass
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    emb: int = 16
    enc_hidden: int = 8
    dec_hidden: int = 8
    att_hidden: int = 0  # 0 -> twice enc_hidden
    channels: int = 8
    visual_dim: int = 0  # 0 -> twice enc_hidden
    encoder_dependent: bool = True
    decoder_dependent: bool = False
    fusion: str = "concat"
    use_image: bool = True

    def __post_init__(self):
        self.fusion = FusionKind(str(self.fusion).lower()).value
        if self.att_hidden == 0:
            self.att_hidden = 2 * self.enc_hidden
        if self.visual_dim == 0:
            self.visual_dim = 2 * self.enc_hidden
        self.validate()

    @property
    def ctx_dim(self) -> int:
        return 2 * self.enc_hidden

    @property
    def wiring(self) -> AttentionWiring:
        return AttentionWiring(self.encoder_dependent, self.decoder_dependent)

    def validate(self) -> None:
        for name in ("src_vocab", "tgt_vocab", "emb", "enc_hidden", "dec_hidden", "att_hidden", "channels", "visual_dim"):
            if getattr(self, name) < 1:
                raise ContractError(f"model.{name} must be positive")
        if self.src_vocab <= BOS or self.tgt_vocab <= BOS:
            raise ContractError("vocabularies must include the reserved tokens")
        if not self.use_image:
            return
        if self.fusion == FusionKind.SUM.value and self.visual_dim != self.ctx_dim:
            raise DimensionError(
                f"SUM fusion needs equal context widths: text {self.ctx_dim}, image {self.visual_dim}"
            )
        if not self.encoder_dependent and self.visual_dim != self.ctx_dim:
            raise DimensionError(
                f"a shared scorer needs equal context widths: text {self.ctx_dim}, image {self.visual_dim}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ParamInfo:
    name: str
    tensor: Tensor
    kind: str  # "weight", "bias" or "embedding"


class MultimodalNMT:
    """Bidirectional-GRU text encoder, projected image annotations, CGRU decoder."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | int | None = 0):
        from .trainer import xavier_init  # local: trainer imports this module

        self.config = c = config
        rng = np.random.default_rng(rng)

        def weight(shape):
            return Tensor(xavier_init(shape, rng), requires_grad=True)

        def bias(n):
            return Tensor(np.zeros(n), requires_grad=True)

        def gru(n_in, n_hid):
            return GruParams(
                weight((n_in, n_hid)), weight((n_in, n_hid)), weight((n_in, n_hid)),
                weight((n_hid, n_hid)), weight((n_hid, n_hid)), weight((n_hid, n_hid)),
                bias(n_hid), bias(n_hid), bias(n_hid),
            )

        D2 = c.ctx_dim
        self.src_emb = weight((c.src_vocab, c.emb))
        self.enc_fwd = gru(c.emb, c.enc_hidden)
        self.enc_bwd = gru(c.emb, c.enc_hidden)
        self.W_im = weight((c.channels, c.visual_dim)) if c.use_image else None
        att = build_variant(
            c.wiring, D2, c.dec_hidden, c.att_hidden,
            im_ctx_dim=c.visual_dim, init=lambda shape: xavier_init(shape, rng),
        )
        fus_in = D2 + (c.visual_dim if c.use_image else 0)
        concat = c.fusion == FusionKind.CONCAT.value
        tgt_emb = weight((c.tgt_vocab, c.emb))
        self.dec = DecoderParams(
            W_init=weight((D2, c.dec_hidden)),
            b_init=bias(c.dec_hidden),
            g1=gru(c.emb, c.dec_hidden),
            g2=gru(D2, c.dec_hidden),
            att=att,
            fusion=FusionKind(c.fusion),
            W_fus=weight((fus_in, D2)) if concat else None,
            b_fus=bias(D2) if concat else None,
            L_s=weight((c.dec_hidden, c.emb)),
            L_c=weight((D2, c.emb)),
            L_o=weight((c.emb, c.tgt_vocab)),
            tgt_emb=tgt_emb,
        )
        with T.no_grad():
            self.src_emb.data[0] = 0.0
            tgt_emb.data[0] = 0.0

    # -- parameters --------------------------------------------------------

    def param_info(self) -> list[ParamInfo]:
        out = [ParamInfo("src_emb", self.src_emb, "embedding")]

        def add_gru(prefix, g):
            for name, t in g.named(prefix):
                out.append(ParamInfo(name, t, "bias" if name.rsplit(".", 1)[1].startswith("b_") else "weight"))

        add_gru("enc.fwd", self.enc_fwd)
        add_gru("enc.bwd", self.enc_bwd)
        if self.W_im is not None:
            out.append(ParamInfo("W_im", self.W_im, "weight"))
        d = self.dec
        out.append(ParamInfo("dec.W_init", d.W_init, "weight"))
        out.append(ParamInfo("dec.b_init", d.b_init, "bias"))
        add_gru("dec.g1", d.g1)
        add_gru("dec.g2", d.g2)
        att_named = list(d.att.named("att"))
        if not self.config.use_image:
            att_named = [(n, t) for n, t in att_named if not n.startswith("att.im.")]
        for name, t in att_named:
            out.append(ParamInfo(name, t, "weight"))
        if d.W_fus is not None:
            out.append(ParamInfo("dec.W_fus", d.W_fus, "weight"))
            out.append(ParamInfo("dec.b_fus", d.b_fus, "bias"))
        out.append(ParamInfo("dec.L_s", d.L_s, "weight"))
        out.append(ParamInfo("dec.L_c", d.L_c, "weight"))
        out.append(ParamInfo("dec.L_o", d.L_o, "weight"))
        out.append(ParamInfo("tgt_emb", d.tgt_emb, "embedding"))
        return out

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for p in self.param_info():
            yield p.name, p.tensor

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ContractError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, t in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} vs model {t.shape}")
            t.data[...] = arr

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    # -- forward -----------------------------------------------------------

    def encode(self, src, src_mask, features=None) -> Annotations:
        """Annotate a padded source batch and its (B, R, C) feature maps."""
        src = np.asarray(src, dtype=np.int64)
        src_mask = np.asarray(src_mask, dtype=bool)
        if src.ndim != 2:
            raise DimensionError(f"encode: source ids must be (B, N), got {src.shape}")
        A_txt = encode_text(src, self.src_emb, self.enc_fwd, self.enc_bwd, src_mask)
        A_im = im_mask = None
        if self.config.use_image:
            if features is None:
                raise ContractError("encode: this model needs feature maps")
            feats = np.asarray(features, dtype=np.float64)
            if feats.ndim != 3 or feats.shape[0] != src.shape[0] or feats.shape[2] != self.config.channels:
                raise DimensionError(
                    f"encode: features {feats.shape} do not fit batch {src.shape[0]} "
                    f"with {self.config.channels} channels"
                )
            A_im = encode_image(Tensor(feats), self.W_im)
            im_mask = np.ones(feats.shape[:2], dtype=bool)
        return Annotations(A_txt, src_mask, A_im, im_mask)

    def init_state(self, ann: Annotations) -> CgruState:
        d = self.dec
        bos = T.embed(d.tgt_emb, np.full(ann.batch_size, BOS))
        return init_state(ann.txt, ann.txt_mask, d.W_init, d.b_init, d.g1, bos)

    def decode_step(self, state: CgruState, y_prev, ann: Annotations) -> StepOutput:
        return decode_step(self.dec, state, y_prev, ann)

    def prepare(self, ann: Annotations) -> Annotations:
        return prepare(self.dec, ann)

    def forward(self, batch: Batch, keep_steps: bool = False):
        """Teacher-forced pass. Returns ``(summed NLL, steps)``.

        ``steps`` lists the :class:`StepOutput` of each position when
        ``keep_steps`` is set, otherwise it is empty.
        """
        ann = self.prepare(self.encode(batch.src, batch.src_mask, batch.features))
        state = self.init_state(ann)
        total = None
        steps = []
        for t in range(batch.tgt_in.shape[1]):
            out = self.decode_step(state, batch.tgt_in[:, t], ann)
            state = out.state
            m = batch.tgt_mask[:, t].astype(np.float64)
            logp = T.pick(T.log_softmax(out.logits), batch.tgt_out[:, t])
            nll = T.scale(T.sum(logp * m), -1.0)
            total = nll if total is None else total + nll
            if keep_steps:
                steps.append(out)
        return total, steps

    def nll(self, batch: Batch) -> Tensor:
        return self.forward(batch)[0]

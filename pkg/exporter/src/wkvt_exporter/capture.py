"""Attention capture from transformers models.

ATTN mode (the default) reads the post-softmax attention maps the runtime
already exposes through ``output_attentions``, so precision quirks of the
runtime's softmax can never diverge from the recorded trace. QK mode grabs
raw query/key projections and is only supported for architectures whose
attention logits are exactly Q K^T / sqrt(d) over those projections (fused
c_attn, GPT-2 family); rotary-embedding models transform Q/K after the
projection, so they must be captured in ATTN mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import wire


class ExportError(RuntimeError):
    pass


@dataclass
class ExportJob:
    model_id: str
    prompt: str
    output: Path
    mode: str = "attn"  # "attn" or "qk"
    max_tokens: int = 4096
    head_view: str = "query"  # "query" or "kv" (aggregate GQA groups)

    def __post_init__(self) -> None:
        if self.mode not in ("attn", "qk"):
            raise ExportError(f"unknown capture mode {self.mode!r}")
        if self.head_view not in ("query", "kv"):
            raise ExportError(f"unknown head view {self.head_view!r}")
        if self.max_tokens < 2:
            raise ExportError("max_tokens must be at least 2")


def capture_attention(model, input_ids: torch.Tensor) -> np.ndarray:
    """Post-softmax causal attention for one prefill, as (m, h, n, n) float32."""
    model.eval()
    with torch.no_grad():
        out = model(input_ids, output_attentions=True, use_cache=False)
    attentions = getattr(out, "attentions", None)
    if not attentions or attentions[0] is None:
        raise ExportError(
            "runtime did not expose attention maps; load the model with an "
            "eager attention implementation"
        )
    stacked = torch.stack(attentions, dim=0)[:, 0]  # (m, h, n, n), batch of 1
    return stacked.to(torch.float32).cpu().numpy()


def aggregate_to_kv_heads(attn: np.ndarray, num_kv_heads: int) -> np.ndarray:
    """Mean query-head maps within each GQA group; rows stay normalized."""
    m, h, n, _ = attn.shape
    if h % num_kv_heads != 0:
        raise ExportError(
            f"{h} query heads do not group evenly into {num_kv_heads} KV heads"
        )
    group = h // num_kv_heads
    return attn.reshape(m, num_kv_heads, group, n, n).mean(axis=2)


def capture_qk(model, input_ids: torch.Tensor) -> tuple[np.ndarray, np.ndarray]:
    """Raw per-head Q/K from fused c_attn projections (GPT-2 family)."""
    blocks = getattr(getattr(model, "transformer", None), "h", None)
    if blocks is None or not all(hasattr(b.attn, "c_attn") for b in blocks):
        raise ExportError(
            "QK capture needs fused c_attn projections (GPT-2 family); "
            "use attn mode for this architecture"
        )
    captured: list[torch.Tensor] = []
    hooks = [
        b.attn.c_attn.register_forward_hook(
            lambda module, args, output: captured.append(output.detach())
        )
        for b in blocks
    ]
    try:
        model.eval()
        with torch.no_grad():
            model(input_ids, use_cache=False)
    finally:
        for hook in hooks:
            hook.remove()

    num_heads = model.config.n_head
    qs, ks = [], []
    for fused in captured:
        q, k, _ = fused[0].split(fused.shape[-1] // 3, dim=-1)  # (n, embd) each
        n, embd = q.shape
        head_dim = embd // num_heads
        qs.append(q.reshape(n, num_heads, head_dim).transpose(0, 1))
        ks.append(k.reshape(n, num_heads, head_dim).transpose(0, 1))
    queries = torch.stack(qs).to(torch.float32).cpu().numpy()
    keys = torch.stack(ks).to(torch.float32).cpu().numpy()
    return queries, keys


def export_from_model(model, tokenizer, job: ExportJob) -> dict:
    """Run one prefill on an already-loaded model and write the WKVT file."""
    encoded = tokenizer(job.prompt, return_tensors="pt")
    input_ids = encoded["input_ids"]
    n = int(input_ids.shape[1])
    if n < 2:
        raise ExportError(f"prompt tokenizes to {n} token(s); need at least 2")
    if n > job.max_tokens:
        raise ExportError(f"prompt tokenizes to {n} tokens, over the {job.max_tokens} cap")

    if job.mode == "attn":
        attn = capture_attention(model, input_ids)
        if job.head_view == "kv":
            num_kv = getattr(model.config, "num_key_value_heads", None)
            if num_kv is None:
                raise ExportError("model config exposes no KV head count")
            attn = aggregate_to_kv_heads(attn, num_kv)
        head_dim = model.config.hidden_size // model.config.num_attention_heads
        data = wire.attn_file_bytes(attn, head_dim)
        shape = attn.shape
    else:
        queries, keys = capture_qk(model, input_ids)
        data = wire.qk_file_bytes(queries, keys)
        shape = queries.shape

    size = wire.write_file(job.output, data)
    return {
        "path": str(job.output),
        "bytes": size,
        "mode": job.mode.upper(),
        "layers": int(shape[0]),
        "heads": int(shape[1]),
        "tokens": n,
        "head_view": job.head_view,
        "model": job.model_id,
    }


def export(job: ExportJob) -> dict:
    """Load the model named by the job, then capture and write."""
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(job.model_id)
        model = AutoModelForCausalLM.from_pretrained(
            job.model_id, attn_implementation="eager", dtype=torch.float32
        )
    except Exception as exc:
        raise ExportError(f"could not load model {job.model_id!r}: {exc}") from exc
    return export_from_model(model, tokenizer, job)

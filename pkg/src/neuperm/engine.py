"""Schedule and apply function-preserving permutations over an archive.

One uniform random permutation per site, one derived seed per site. Every
ref of a site is rewritten with the same index array p
(out[..., i, ...] = in[..., p[i], ...]), which preserves the function: a
producer's axis-0 reorder is compensated by reordering each consumer's
contraction axis with the same p.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .archive import ModelArchive
from .descriptor import ArchDescriptor, GqaMeta, PermutableSite, validate_descriptor
from .errors import DescriptorError
from .rng import SeededRng, derive_seed
from .tensor import Tensor, fisher_yates, is_permutation, permute_axis, permute_axis_blocks


def site_seed(master_seed: int, site_id: str) -> int:
    return derive_seed(master_seed, f"site/{site_id}")


@dataclass(frozen=True)
class PermutationSchedule:
    """Which sites get permuted, and by what."""

    master_seed: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def inverse(self) -> "PermutationSchedule":
        from .tensor import invert

        return PermutationSchedule(
            self.master_seed, {sid: invert(p) for sid, p in self.entries.items()}
        )


@dataclass(frozen=True)
class CoverageReport:
    """How much of the model any rewrite touched.

    changed_params counts every element of every tensor named by an applied
    site, each element once (identity permutations still count: coverage
    measures permutable positions, not value changes).
    """

    total_params: int
    changed_params: int
    per_site: dict[str, int]
    applied_sites: tuple[str, ...]

    @property
    def fraction(self) -> float:
        if self.total_params == 0:
            return 0.0
        return self.changed_params / self.total_params

    @property
    def percent(self) -> float:
        """Fraction at tabular display precision (two decimals)."""
        return round(self.fraction * 100.0, 2)


def _site_param_counts(
    desc: ArchDescriptor, shapes: dict[str, tuple[int, ...]]
) -> dict[str, int]:
    def numel(name: str) -> int:
        count = 1
        for s in shapes[name]:
            count *= s
        return count

    return {
        site.site_id: sum(numel(name) for name in sorted(site.tensor_names()))
        for site in desc.sites
    }


def _coverage(
    desc: ArchDescriptor,
    shapes: dict[str, tuple[int, ...]],
    applied: list[PermutableSite],
) -> CoverageReport:
    def numel(name: str) -> int:
        count = 1
        for s in shapes[name]:
            count *= s
        return count

    touched: set[str] = set()
    per_site: dict[str, int] = {}
    for site in applied:
        names = site.tensor_names()
        per_site[site.site_id] = sum(numel(n) for n in names)
        touched |= names
    changed = sum(numel(n) for n in touched)
    return CoverageReport(
        total_params=desc.total_params,
        changed_params=changed,
        per_site=per_site,
        applied_sites=tuple(s.site_id for s in applied),
    )


def make_schedule(
    desc: ArchDescriptor,
    master_seed: int,
    fraction_target: float | None = None,
    archive: ModelArchive | None = None,
) -> PermutationSchedule:
    """Draw one permutation per selected site.

    fraction_target None (or 1.0) selects every site. A partial target picks
    sites greedily by parameter count, largest first (site_id breaks ties),
    until the covered fraction reaches the target; only that path needs
    shape information (from the archive or the descriptor's shapes map).
    """
    if fraction_target is None or fraction_target >= 1.0:
        selected = list(desc.sites)
    else:
        selected = _select_sites(desc, desc.resolve_shapes(archive), fraction_target)
    entries: dict[str, np.ndarray] = {}
    for site in selected:
        rng = SeededRng(site_seed(master_seed, site.site_id))
        entries[site.site_id] = fisher_yates(site.n, rng)
    return PermutationSchedule(master_seed=master_seed, entries=entries)


def _select_sites(
    desc: ArchDescriptor,
    shapes: dict[str, tuple[int, ...]],
    fraction_target: float | None,
) -> list[PermutableSite]:
    if fraction_target is None or fraction_target >= 1.0:
        return list(desc.sites)
    if fraction_target < 0.0:
        raise ValueError("fraction_target must be in [0, 1]")
    sizes = _site_param_counts(desc, shapes)
    order = sorted(desc.sites, key=lambda s: (-sizes[s.site_id], s.site_id))

    def numel(name: str) -> int:
        count = 1
        for s in shapes[name]:
            count *= s
        return count

    chosen: list[PermutableSite] = []
    touched: set[str] = set()
    covered = 0
    for site in order:
        if desc.total_params and covered / desc.total_params >= fraction_target:
            break
        chosen.append(site)
        for name in site.tensor_names():
            if name not in touched:
                touched.add(name)
                covered += numel(name)
    # keep descriptor order for deterministic application
    chosen_ids = {s.site_id for s in chosen}
    return [s for s in desc.sites if s.site_id in chosen_ids]


def apply_schedule(
    archive: ModelArchive, desc: ArchDescriptor, schedule: PermutationSchedule
) -> tuple[ModelArchive, CoverageReport]:
    """Rewrite the archive under the schedule. Unscheduled tensors pass through."""
    validate_descriptor(desc, archive)
    updates: dict[str, Tensor] = {}
    applied: list[PermutableSite] = []
    for site in desc.sites:
        p = schedule.entries.get(site.site_id)
        if p is None:
            continue
        if not is_permutation(p, site.n):
            raise ValueError(
                f"schedule entry for {site.site_id!r} is not a permutation of {site.n}"
            )
        applied.append(site)
        for name, axis in site.refs:
            t = updates.get(name, archive.tensors[name])
            updates[name] = permute_axis_blocks(t, axis, p, site.n)
    report = _coverage(desc, desc.resolve_shapes(archive), applied)
    return archive.replace(updates), report


def count_changed_fraction(
    desc: ArchDescriptor,
    site_ids: tuple[str, ...] | None = None,
    archive: ModelArchive | None = None,
) -> CoverageReport:
    """Coverage accounting without touching any weights.

    Works from the archive's shapes or the descriptor's own shapes map, so
    it also serves architectures whose archives are never materialized.
    """
    shapes = desc.resolve_shapes(archive)
    if site_ids is None:
        applied = list(desc.sites)
    else:
        wanted = set(site_ids)
        unknown = wanted - {s.site_id for s in desc.sites}
        if unknown:
            raise DescriptorError(f"unknown site ids {sorted(unknown)}")
        applied = [s for s in desc.sites if s.site_id in wanted]
    return _coverage(desc, shapes, applied)


# direct forms of the three site rewrites; apply_schedule is the generic path


def permute_fc_pair(
    w1: Tensor, b1: Tensor | None, w2: Tensor, p: np.ndarray
) -> tuple[Tensor, Tensor | None, Tensor]:
    """Reorder hidden units between two dense layers.

    w1 rows and b1 entries move by p; w2 columns move by the same p, so
    w2' @ relu(w1' x + b1') equals the original for any elementwise
    activation.
    """
    n = w1.shape[0]
    if w2.shape[1] != n or (b1 is not None and b1.shape != (n,)):
        raise ValueError("shapes do not share a hidden width")
    w1p = permute_axis(w1, 0, p)
    b1p = permute_axis(b1, 0, p) if b1 is not None else None
    w2p = permute_axis(w2, 1, p)
    return w1p, b1p, w2p


def permute_conv_block(
    w1: Tensor,
    b1: Tensor | None,
    bn: tuple[Tensor, Tensor, Tensor, Tensor] | None,
    w2: Tensor,
    p: np.ndarray,
) -> tuple[Tensor, Tensor | None, tuple[Tensor, ...] | None, Tensor]:
    """Reorder channels across CONV -> (BN) -> CONV.

    All four batchnorm vectors (gamma, beta, running_mean, running_var)
    follow the channel permutation; the downstream kernel consumes channels
    via its axis 1.
    """
    n = w1.shape[0]
    if w2.shape[1] != n:
        raise ValueError("second kernel does not consume the first one's channels")
    w1p = permute_axis(w1, 0, p)
    b1p = permute_axis(b1, 0, p) if b1 is not None else None
    bnp = tuple(permute_axis(t, 0, p) for t in bn) if bn is not None else None
    w2p = permute_axis(w2, 1, p)
    return w1p, b1p, bnp, w2p


def permute_attention_gqa(
    wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor, meta: GqaMeta, p: np.ndarray
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Reorder kv-head groups in grouped-query attention.

    Projections are stored [out, in]. wq's rows form h_kv groups of
    (h_q/h_kv)*head_dim rows, wk/wv rows form h_kv groups of head_dim, and
    wo's columns mirror wq's rows; all move by the same group permutation.
    """
    n = meta.h_kv
    if wq.shape[0] != meta.h_q * meta.head_dim or wk.shape[0] != n * meta.head_dim:
        raise ValueError("projection shapes do not match gqa meta")
    if wv.shape[0] != wk.shape[0] or wo.shape[1] != wq.shape[0]:
        raise ValueError("projection shapes do not match gqa meta")
    return (
        permute_axis_blocks(wq, 0, p, n),
        permute_axis_blocks(wk, 0, p, n),
        permute_axis_blocks(wv, 0, p, n),
        permute_axis_blocks(wo, 1, p, n),
    )

"""Analytic cost model for fusion layers, cross-validated against the engine.

Costs are MACs (1 multiply-accumulate = 1 unit; the usual 2x multiply-add
FLOP convention cancels out of every ratio). Elementwise add/negate/ReLU are
not counted. Two figures are reported for each fusion layer:

  bound  - the conservative closed form 2*ceil(k^2/2)*C_in*n*H*W for the two
           sparse convolutions plus branches*n*C_out*H*W for the 1x1 mix;
           the reduction-ratio table is defined in terms of this form.
  exact  - the true nonzero count: the pair executes ceil(k^2/2) +
           floor(k^2/2) = k^2 taps, so k^2*C_in*n*H*W plus the same 1x1
           term. This is what the instrumented engine must match to the MAC,
           and it is always <= the bound (strictly, for odd k > 1).

Parameter counts are the same expressions without the H*W factors; the exact
figure additionally counts the 1x1 bias so it equals the built model's
learnable-parameter count. The baseline is the dense convolution the layer
replaces: k^2*C_in*C_out*H*W MACs and k^2*C_in*C_out weights.

With ratio r = C_out/C_in and alpha = C_out/n the bound-form MAC reduction is

    rho = alpha * k^2 / (2*ceil(k^2/2) + 4*r)

for the full module (4 branches).
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from .fusion import SCFusionConfig
from .models import ConvD, FcD, ResBlockD, SCFusionD, propagate


@dataclass
class LayerCostReport:
    layer_name: str
    kind: str                     # conv | scfusion | fc
    compressed: bool
    h_out: int
    w_out: int
    baseline_macs: int
    scfusion_macs: int            # exact nonzero-count cost
    scfusion_macs_bound: int      # conservative closed-form cost
    baseline_params: int
    scfusion_params: int          # exact, includes the 1x1 bias
    scfusion_params_bound: int
    rho_macs: Fraction
    rho_macs_bound: Fraction
    rho_params: Fraction
    rho_params_bound: Fraction


def reduction_ratio(k, alpha, ratio):
    """Closed-form MAC reduction of the full module vs a dense conv."""
    alpha = Fraction(alpha)
    ratio = Fraction(ratio)
    if alpha <= 0 or ratio <= 0:
        raise ValueError("alpha and ratio must be positive")
    return alpha * k * k / (2 * math.ceil(k * k / 2) + 4 * ratio)


def table2(k=3):
    """The reduction-ratio grid for alpha in {2,4,8} x ratio in {1,2}."""
    return {
        (alpha, ratio): reduction_ratio(k, alpha, ratio)
        for ratio in (1, 2)
        for alpha in (2, 4, 8)
    }


def _report(layer_name, kind, compressed, h_out, w_out,
            baseline_macs, scf_macs, scf_macs_bound,
            baseline_params, scf_params, scf_params_bound):
    return LayerCostReport(
        layer_name=layer_name, kind=kind, compressed=compressed,
        h_out=h_out, w_out=w_out,
        baseline_macs=baseline_macs,
        scfusion_macs=scf_macs,
        scfusion_macs_bound=scf_macs_bound,
        baseline_params=baseline_params,
        scfusion_params=scf_params,
        scfusion_params_bound=scf_params_bound,
        rho_macs=Fraction(baseline_macs, scf_macs),
        rho_macs_bound=Fraction(baseline_macs, scf_macs_bound),
        rho_params=Fraction(baseline_params, scf_params),
        rho_params_bound=Fraction(baseline_params, scf_params_bound),
    )


def layer_cost(cfg, h_out, w_out, layer_name="scfusion"):
    """Costs of one fusion layer against the dense conv it replaces."""
    k2 = cfg.k * cfg.k
    ce2 = 2 * math.ceil(k2 / 2)
    hw = h_out * w_out
    n, b = cfg.n_base, cfg.branches
    base_taps = k2  # the sparse pair executes k^2 taps total; a dense base too
    bound_taps = ce2 if cfg.sc_kernels else k2
    fuse_macs = b * n * cfg.c_out * hw
    return _report(
        layer_name, "scfusion", True, h_out, w_out,
        baseline_macs=k2 * cfg.c_in * cfg.c_out * hw,
        scf_macs=base_taps * cfg.c_in * n * hw + fuse_macs,
        scf_macs_bound=bound_taps * cfg.c_in * n * hw + fuse_macs,
        baseline_params=k2 * cfg.c_in * cfg.c_out,
        scf_params=base_taps * cfg.c_in * n + b * n * cfg.c_out + cfg.c_out,
        scf_params_bound=bound_taps * cfg.c_in * n + b * n * cfg.c_out,
    )


def dense_layer_cost(c_in, c_out, k, h_out, w_out, layer_name="conv"):
    """An uncompressed conv layer: both sides of the ratio are the dense cost."""
    macs = k * k * c_in * c_out * h_out * w_out
    params = k * k * c_in * c_out
    return _report(layer_name, "conv", False, h_out, w_out,
                   macs, macs, macs, params, params, params)


def fc_layer_cost(in_features, out, layer_name="fc"):
    macs = in_features * out
    params = in_features * out + out
    return _report(layer_name, "fc", False, 1, 1,
                   macs, macs, macs, params, params, params)


@dataclass
class ModelCostTotals:
    conv_baseline_macs: int
    conv_scfusion_macs: int
    conv_scfusion_macs_bound: int
    conv_baseline_params: int
    conv_scfusion_params: int
    conv_scfusion_params_bound: int
    fc_macs: int
    fc_params: int
    rho_conv_macs: Fraction
    rho_conv_macs_bound: Fraction
    rho_conv_params: Fraction
    rho_conv_params_bound: Fraction
    model_baseline_macs: int
    model_scfusion_macs: int
    model_baseline_params: int
    model_scfusion_params: int
    rho_model_macs: Fraction
    rho_model_params: Fraction


def model_cost(spec):
    """Per-layer reports plus conv-only and whole-model totals.

    FC layers are counted but never compressed; pooling and GAP cost no MACs
    under this model. Analytic counts are per input sample (batch 1).
    """
    shapes = propagate(spec)
    reports = []
    for i, layer in enumerate(spec.layers):
        c_in, h_in, w_in = shapes[i]
        c_out, h_out, w_out = shapes[i + 1]
        name = f"layer{i}"
        if isinstance(layer, ConvD):
            reports.append(dense_layer_cost(c_in, c_out, layer.k, h_out, w_out,
                                            f"{name}.conv"))
        elif isinstance(layer, SCFusionD):
            cfg = SCFusionConfig(c_in=c_in, c_out=layer.out, k=layer.k,
                                 stride=layer.stride, padding=layer.pad,
                                 alpha=layer.alpha, use_addition=layer.add,
                                 use_inverse=layer.inv, sc_kernels=layer.sc)
            reports.append(layer_cost(cfg, h_out, w_out, f"{name}.scfusion"))
        elif isinstance(layer, ResBlockD):
            for tag in ("a", "b"):
                if layer.alpha is None:
                    reports.append(dense_layer_cost(c_in, c_in, layer.k, h_in, w_in,
                                                    f"{name}.{tag}.conv"))
                else:
                    cfg = SCFusionConfig(c_in=c_in, c_out=c_in, k=layer.k,
                                         stride=1, padding=layer.pad,
                                         alpha=layer.alpha, use_addition=layer.add,
                                         use_inverse=layer.inv, sc_kernels=layer.sc)
                    reports.append(layer_cost(cfg, h_in, w_in, f"{name}.{tag}.scfusion"))
        elif isinstance(layer, FcD):
            reports.append(fc_layer_cost(c_in * h_in * w_in, layer.out, f"{name}.fc"))
    conv = [r for r in reports if r.kind in ("conv", "scfusion")]
    fc = [r for r in reports if r.kind == "fc"]
    cb = sum(r.baseline_macs for r in conv)
    cs = sum(r.scfusion_macs for r in conv)
    csb = sum(r.scfusion_macs_bound for r in conv)
    cbp = sum(r.baseline_params for r in conv)
    csp = sum(r.scfusion_params for r in conv)
    cspb = sum(r.scfusion_params_bound for r in conv)
    fm = sum(r.baseline_macs for r in fc)
    fp = sum(r.baseline_params for r in fc)
    totals = ModelCostTotals(
        conv_baseline_macs=cb, conv_scfusion_macs=cs, conv_scfusion_macs_bound=csb,
        conv_baseline_params=cbp, conv_scfusion_params=csp, conv_scfusion_params_bound=cspb,
        fc_macs=fm, fc_params=fp,
        rho_conv_macs=Fraction(cb, cs) if cs else Fraction(1),
        rho_conv_macs_bound=Fraction(cb, csb) if csb else Fraction(1),
        rho_conv_params=Fraction(cbp, csp) if csp else Fraction(1),
        rho_conv_params_bound=Fraction(cbp, cspb) if cspb else Fraction(1),
        model_baseline_macs=cb + fm, model_scfusion_macs=cs + fm,
        model_baseline_params=cbp + fp, model_scfusion_params=csp + fp,
        rho_model_macs=Fraction(cb + fm, cs + fm) if cs + fm else Fraction(1),
        rho_model_params=Fraction(cbp + fp, csp + fp) if csp + fp else Fraction(1),
    )
    return reports, totals


def verify_against_counter(report, measured):
    """True iff the engine's executed MACs equal the exact analytic count."""
    return measured.macs == report.scfusion_macs

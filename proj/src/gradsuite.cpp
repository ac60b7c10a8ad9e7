#include "a2/gradsuite.hpp"

#include <cmath>
#include <memory>

#include "a2/attention.hpp"
#include "a2/gradcheck.hpp"
#include "a2/layers.hpp"
#include "a2/ops.hpp"
#include "a2/rng.hpp"
#include "a2/train.hpp"

namespace a2 {

namespace {

using D = double;

Tensor<D> randn(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<D> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal() * scale;
  return t;
}

// Weighted sum against a fixed random tensor; turns any output into a scalar
// that exercises the whole Jacobian.
Tensor<D> pinch(const Tensor<D>& out, const Tensor<D>& weights, Tape<D>* tape) {
  return sum(mul(out, weights, tape), tape);
}

double check_over_seeds(int seeds, double step, std::uint64_t salt,
                        const std::function<double(Rng&, double)>& one) {
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(0xACC0ULL + salt * 1000003ULL + static_cast<std::uint64_t>(s));
    worst = std::max(worst, one(rng, step));
  }
  return worst;
}

ConvParams<D> random_conv(const ConvSpec& spec, Rng& rng) {
  ConvParams<D> p;
  p.weight = randn({spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel},
                   rng, 0.5);
  if (spec.has_bias) p.bias = randn({spec.out_channels}, rng, 0.1);
  return p;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(int seeds_per_block, double step) {
  std::vector<GradCheckResult> results;
  auto report = [&](const std::string& name, double err) {
    results.push_back({name, err, seeds_per_block});
  };

  // conv 3x3, gradient wrt input and weight
  report("conv3x3/input", check_over_seeds(seeds_per_block, step, 1, [](Rng& rng, double h) {
    const ConvSpec spec = ConvSpec::standard(2, 3, 3, 1);
    const Tensor<D> w = randn({3, 2, 3, 3}, rng, 0.5);
    const Tensor<D> pin = randn({1, 3, 5, 5}, rng);
    const Tensor<D> x = randn({1, 2, 5, 5}, rng);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) { return pinch(conv2d<D>(v, spec, w, nullptr, tape), pin, tape); },
        x, h);
  }));
  report("conv3x3/weight", check_over_seeds(seeds_per_block, step, 2, [](Rng& rng, double h) {
    const ConvSpec spec = ConvSpec::standard(2, 3, 3, 2);
    const Tensor<D> x = randn({2, 2, 5, 5}, rng);
    const Tensor<D> pin = randn({2, 3, 3, 3}, rng);
    const Tensor<D> w0 = randn({3, 2, 3, 3}, rng, 0.5);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) { return pinch(conv2d<D>(x, spec, v, nullptr, tape), pin, tape); },
        w0, h);
  }));

  // depthwise conv
  report("depthwise/input", check_over_seeds(seeds_per_block, step, 3, [](Rng& rng, double h) {
    const ConvSpec spec = ConvSpec::depthwise(4, 1);
    const Tensor<D> w = randn({4, 1, 3, 3}, rng, 0.5);
    const Tensor<D> pin = randn({1, 4, 6, 6}, rng);
    const Tensor<D> x = randn({1, 4, 6, 6}, rng);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) {
          return pinch(depthwise_conv<D>(v, spec, w, tape), pin, tape);
        },
        x, h);
  }));
  report("depthwise/weight", check_over_seeds(seeds_per_block, step, 4, [](Rng& rng, double h) {
    const ConvSpec spec = ConvSpec::depthwise(4, 2);
    const Tensor<D> x = randn({1, 4, 6, 6}, rng);
    const Tensor<D> pin = randn({1, 4, 3, 3}, rng);
    const Tensor<D> w0 = randn({4, 1, 3, 3}, rng, 0.5);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) {
          return pinch(depthwise_conv<D>(x, spec, v, tape), pin, tape);
        },
        w0, h);
  }));

  // batchnorm, train mode, wrt input and gamma
  report("batchnorm_train/input", check_over_seeds(seeds_per_block, step, 5, [](Rng& rng, double h) {
    BatchNormState<D> st = BatchNormState<D>::init(3);
    for (int i = 0; i < 3; ++i) {
      st.gamma.data()[i] = 0.5 + rng.uniform();
      st.beta.data()[i] = rng.normal() * 0.2;
    }
    const Tensor<D> pin = randn({2, 3, 4, 4}, rng);
    const Tensor<D> x = randn({2, 3, 4, 4}, rng);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) {
          BatchNormState<D> local = st;
          local.running_mean = st.running_mean.clone();
          local.running_var = st.running_var.clone();
          return pinch(batchnorm(v, local, Mode::Train, tape), pin, tape);
        },
        x, h);
  }));
  report("batchnorm_train/gamma", check_over_seeds(seeds_per_block, step, 6, [](Rng& rng, double h) {
    const Tensor<D> x = randn({2, 3, 4, 4}, rng);
    const Tensor<D> pin = randn({2, 3, 4, 4}, rng);
    const Tensor<D> g0 = randn({3}, rng, 0.5);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) {
          BatchNormState<D> local = BatchNormState<D>::init(3);
          local.gamma = v;
          return pinch(batchnorm(x, local, Mode::Train, tape), pin, tape);
        },
        g0, h);
  }));

  // relu6, sampled away from the kinks at 0 and 6
  report("relu6", check_over_seeds(seeds_per_block, step, 7, [](Rng& rng, double h) {
    Tensor<D> x({2, 3, 4, 4});
    for (std::size_t i = 0; i < x.size(); ++i) {
      double v = -2.9 + rng.uniform() * 11.8;  // (-2.9, 8.9)
      if (std::abs(v) < 0.1) v = v < 0 ? v - 0.1 : v + 0.1;
      if (std::abs(v - 6.0) < 0.1) v = v < 6.0 ? v - 0.1 : v + 0.1;
      x.data()[i] = v;
    }
    Rng rng2(rng.next_u64());
    const Tensor<D> pin = randn({2, 3, 4, 4}, rng2);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) { return pinch(relu6(v, tape), pin, tape); }, x, h);
  }));

  // global average pooling
  report("avgpool", check_over_seeds(seeds_per_block, step, 8, [](Rng& rng, double h) {
    const Tensor<D> pin = randn({2, 5, 1, 1}, rng);
    const Tensor<D> x = randn({2, 5, 4, 4}, rng);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) { return pinch(global_avgpool(v, tape), pin, tape); }, x,
        h);
  }));

  // plain inverted residual with shortcut
  report("inverted_residual", check_over_seeds(seeds_per_block, step, 9, [](Rng& rng, double h) {
    InvertedResidualSpec spec{8, 8, 1, 6};
    auto params = std::make_shared<InvertedResidualParams<D>>();
    const int ce = spec.expanded_channels();
    params->expand = random_conv(ConvSpec::pointwise(8, ce), rng);
    params->expand_bn = BatchNormState<D>::init(ce);
    params->dw = random_conv(ConvSpec::depthwise(ce, 1), rng);
    params->dw_bn = BatchNormState<D>::init(ce);
    params->project = random_conv(ConvSpec::pointwise(ce, 8), rng);
    params->project_bn = BatchNormState<D>::init(8);
    const Tensor<D> pin = randn({1, 8, 6, 6}, rng);
    const Tensor<D> x = randn({1, 8, 6, 6}, rng);
    return finite_diff_check<D>(
        [&, params](Tape<D>* tape, Tensor<D>& v) {
          return pinch(inverted_residual(v, spec, *params, Mode::Train, tape), pin, tape);
        },
        x, h);
  }));

  // attention pooling stages
  report("gather", check_over_seeds(seeds_per_block, step, 10, [](Rng& rng, double h) {
    const Tensor<D> b = randn({1, 4, 3, 3}, rng);
    const Tensor<D> pin = randn({1, 4, 4}, rng);
    const Tensor<D> a = randn({1, 4, 3, 3}, rng);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) { return pinch(gather(v, b, tape), pin, tape); }, a, h);
  }));
  report("gather/b", check_over_seeds(seeds_per_block, step, 11, [](Rng& rng, double h) {
    const Tensor<D> a = randn({1, 4, 3, 3}, rng);
    const Tensor<D> pin = randn({1, 4, 4}, rng);
    const Tensor<D> b0 = randn({1, 4, 3, 3}, rng);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) { return pinch(gather(a, v, tape), pin, tape); }, b0, h);
  }));
  report("distribute", check_over_seeds(seeds_per_block, step, 12, [](Rng& rng, double h) {
    const Tensor<D> v_in = randn({1, 4, 3, 3}, rng);
    const Tensor<D> pin = randn({1, 5, 3, 3}, rng);
    const Tensor<D> g0 = randn({1, 5, 4}, rng);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& t) { return pinch(distribute(t, v_in, tape), pin, tape); },
        g0, h);
  }));
  report("distribute/v", check_over_seeds(seeds_per_block, step, 13, [](Rng& rng, double h) {
    const Tensor<D> g = randn({1, 5, 4}, rng);
    const Tensor<D> pin = randn({1, 5, 3, 3}, rng);
    const Tensor<D> v0 = randn({1, 4, 3, 3}, rng);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& t) { return pinch(distribute(g, t, tape), pin, tape); }, v0,
        h);
  }));

  // full attended inverted residual (r1 = r2 = 2 on 12 expanded channels)
  report("attended_block", check_over_seeds(seeds_per_block, step, 14, [](Rng& rng, double h) {
    InvertedResidualSpec spec{2, 2, 1, 6};
    const int ce = spec.expanded_channels();  // 12
    auto params = std::make_shared<InvertedResidualParams<D>>();
    params->expand = random_conv(ConvSpec::pointwise(2, ce), rng);
    params->expand_bn = BatchNormState<D>::init(ce);
    params->dw = random_conv(ConvSpec::depthwise(ce, 1), rng);
    params->dw_bn = BatchNormState<D>::init(ce);
    auto attn = std::make_shared<DoubleAttentionParams<D>>();
    attn->spec = DoubleAttentionSpec{ce, 2, 2};
    attn->theta = random_conv(ConvSpec::pointwise(ce, attn->spec.c_m(), true), rng);
    attn->phi = random_conv(ConvSpec::pointwise(ce, attn->spec.c_n(), true), rng);
    attn->rho = random_conv(ConvSpec::pointwise(ce, attn->spec.c_n(), true), rng);
    attn->out = random_conv(ConvSpec::pointwise(attn->spec.c_m(), ce, true), rng);
    params->attention = attn;
    params->project = random_conv(ConvSpec::pointwise(ce, 2), rng);
    params->project_bn = BatchNormState<D>::init(2);
    const Tensor<D> pin = randn({1, 2, 4, 4}, rng);
    const Tensor<D> x = randn({1, 2, 4, 4}, rng);
    return finite_diff_check<D>(
        [&, params](Tape<D>* tape, Tensor<D>& v) {
          return pinch(attended_inverted_residual(v, spec, *params, Mode::Train, tape), pin, tape);
        },
        x, h);
  }));

  // cross-entropy wrt logits
  report("cross_entropy", check_over_seeds(seeds_per_block, step, 15, [](Rng& rng, double h) {
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.below(5)));
    const Tensor<D> logits = randn({4, 5}, rng, 2.0);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) { return cross_entropy_loss(v, labels, tape); }, logits,
        h);
  }));

  // tensor-core primitives
  report("softmax", check_over_seeds(seeds_per_block, step, 16, [](Rng& rng, double h) {
    const Tensor<D> pin = randn({2, 4, 3}, rng);
    const Tensor<D> x = randn({2, 4, 3}, rng, 2.0);
    const int axis = static_cast<int>(rng.below(3));
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) { return pinch(softmax(v, axis, tape), pin, tape); }, x,
        h);
  }));
  report("matmul_batched", check_over_seeds(seeds_per_block, step, 17, [](Rng& rng, double h) {
    const Tensor<D> b = randn({2, 4, 5}, rng);
    const Tensor<D> pin = randn({2, 3, 5}, rng);
    const Tensor<D> a0 = randn({2, 3, 4}, rng);
    return finite_diff_check<D>(
        [&](Tape<D>* tape, Tensor<D>& v) { return pinch(matmul_batched(v, b, tape), pin, tape); },
        a0, h);
  }));

  return results;
}

}  // namespace a2

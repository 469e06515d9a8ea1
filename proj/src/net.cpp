#include "invarep/net.hpp"

#include <cmath>
#include <string>

namespace invarep {
namespace {

void check_dims(const NormNet& net) {
  if (net.layers.empty()) throw ShapeError("net has no layers");
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    if (net.layers[l + 1].weight.cols() != net.layers[l].weight.rows()) {
      throw ShapeError("layer " + std::to_string(l + 1) + " input width " +
                       std::to_string(net.layers[l + 1].weight.cols()) +
                       " does not match previous output width " +
                       std::to_string(net.layers[l].weight.rows()));
    }
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (net.layers[l].bias.size() != net.layers[l].weight.rows()) {
      throw ShapeError("layer " + std::to_string(l) + " bias length mismatch");
    }
  }
}

// y = x W^T + b, one row per sample.
void affine(const Mat& x, const Layer& layer, Mat& out) {
  const std::size_t n = x.rows(), in = x.cols(), outw = layer.weight.rows();
  out = Mat(n, outw);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.row(i);
    double* oi = out.row(i);
    for (std::size_t j = 0; j < outw; ++j) {
      oi[j] = layer.bias[j] + dot(layer.weight.row(j), xi, in);
    }
  }
}

}  // namespace

std::size_t NormNet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

NormNet make_net(const std::vector<std::size_t>& dims, double norm_budget, Rng& rng,
                 std::optional<double> output_clamp) {
  if (dims.size() < 2) throw ShapeError("make_net: need at least input and output dims");
  NormNet net;
  net.norm_budget = norm_budget;
  net.output_clamp = output_clamp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    layer.weight = Mat(dims[l + 1], dims[l]);
    layer.bias.assign(dims[l + 1], 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = rng.uniform(-bound, bound);
    }
    net.layers.push_back(std::move(layer));
  }
  project_norm(net);
  return net;
}

Mat forward(const NormNet& net, const Mat& x) {
  ForwardCache cache;
  return forward(net, x, cache);
}

Mat forward(const NormNet& net, const Mat& x, ForwardCache& cache) {
  check_dims(net);
  if (x.cols() != net.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) +
                     " columns, network expects " + std::to_string(net.input_dim()));
  }
  cache.input = x;
  cache.preact.clear();
  cache.postact.clear();
  cache.net_version = net.version;
  cache.batch = x.rows();

  const Mat* cur = &x;
  Mat z;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    affine(*cur, net.layers[l], z);
    cache.preact.push_back(z);
    if (l + 1 < net.layers.size()) {
      for (std::size_t i = 0; i < z.size(); ++i) {
        z.data()[i] = z.data()[i] > 0.0 ? z.data()[i] : 0.0;
      }
      cache.postact.push_back(z);
      cur = &cache.postact.back();
    }
  }
  Mat out = cache.preact.back();
  if (net.output_clamp) {
    const double b = *net.output_clamp;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.data()[i] = std::min(std::max(out.data()[i], -b), b);
    }
  }
  return out;
}

NetGrads::NetGrads(const NormNet& net) {
  layers.reserve(net.layers.size());
  for (const auto& l : net.layers) {
    Layer g;
    g.weight = Mat(l.weight.rows(), l.weight.cols());
    g.bias.assign(l.bias.size(), 0.0);
    layers.push_back(std::move(g));
  }
}

void NetGrads::add_scaled(const NetGrads& other, double scale) {
  if (layers.size() != other.layers.size()) throw ShapeError("add_scaled: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = 0; i < layers[l].weight.size(); ++i) {
      layers[l].weight.data()[i] += scale * other.layers[l].weight.data()[i];
    }
    for (std::size_t i = 0; i < layers[l].bias.size(); ++i) {
      layers[l].bias[i] += scale * other.layers[l].bias[i];
    }
  }
}

NetGrads backward(const NormNet& net, const ForwardCache& cache, const Mat& out_cotangent,
                  Mat* input_cotangent) {
  check_dims(net);
  if (cache.net_version != net.version) {
    throw CacheError("backward: cache is stale (network was modified after forward)");
  }
  if (cache.preact.size() != net.layers.size() || cache.input.cols() != net.input_dim()) {
    throw CacheError("backward: cache does not match this network's shape");
  }
  if (out_cotangent.rows() != cache.batch || out_cotangent.cols() != net.output_dim()) {
    throw ShapeError("backward: cotangent shape mismatch");
  }

  const std::size_t n = cache.batch;
  NetGrads grads(net);
  Mat g = out_cotangent;

  if (net.output_clamp) {
    const double b = *net.output_clamp;
    const Mat& pre = cache.preact.back();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(pre.data()[i] > -b && pre.data()[i] < b)) g.data()[i] = 0.0;
    }
  }

  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const Mat& in = l == 0 ? cache.input : cache.postact[l - 1];
    Layer& gl = grads.layers[l];
    const std::size_t outw = net.layers[l].weight.rows();
    const std::size_t inw = net.layers[l].weight.cols();
    for (std::size_t i = 0; i < n; ++i) {
      const double* gi = g.row(i);
      const double* xi = in.row(i);
      for (std::size_t j = 0; j < outw; ++j) {
        gl.bias[j] += gi[j];
        double* wrow = gl.weight.row(j);
        for (std::size_t k = 0; k < inw; ++k) wrow[k] += gi[j] * xi[k];
      }
    }
    if (l == 0 && input_cotangent == nullptr) break;
    // Propagate to the layer input: g_prev = g W, masked by the ReLU pattern.
    Mat gp(n, inw);
    for (std::size_t i = 0; i < n; ++i) {
      const double* gi = g.row(i);
      double* gpi = gp.row(i);
      for (std::size_t k = 0; k < inw; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < outw; ++j) s += gi[j] * net.layers[l].weight(j, k);
        gpi[k] = s;
      }
    }
    if (l > 0) {
      const Mat& pre = cache.preact[l - 1];
      for (std::size_t i = 0; i < gp.size(); ++i) {
        if (!(pre.data()[i] > 0.0)) gp.data()[i] = 0.0;
      }
    }
    g = std::move(gp);
  }
  if (input_cotangent) *input_cotangent = std::move(g);
  return grads;
}

double weight_norm(const NormNet& net) {
  check_dims(net);
  const Layer& last = net.layers.back();
  double prod = 0.0;
  for (std::size_t j = 0; j < last.weight.rows(); ++j) {
    prod = std::max(prod, l1_norm(last.weight.row(j), last.weight.cols()));
  }
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    double block = 0.0;
    for (std::size_t j = 0; j < layer.weight.rows(); ++j) {
      block = std::max(block, l1_norm(layer.weight.row(j), layer.weight.cols()) +
                                  std::fabs(layer.bias[j]));
    }
    prod *= std::max(block, 1.0);
  }
  return prod;
}

void project_norm(NormNet& net) {
  const double k = weight_norm(net);
  if (k <= net.norm_budget || k == 0.0) return;
  const double c = net.norm_budget / k;
  Layer& last = net.layers.back();
  for (std::size_t i = 0; i < last.weight.size(); ++i) last.weight.data()[i] *= c;
  for (double& b : last.bias) b *= c;
  ++net.version;
}

void project_rows(NormNet& net) {
  check_dims(net);
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    Layer& layer = net.layers[l];
    for (std::size_t j = 0; j < layer.weight.rows(); ++j) {
      const double s =
          l1_norm(layer.weight.row(j), layer.weight.cols()) + std::fabs(layer.bias[j]);
      if (s > 1.0) {
        const double c = 1.0 / s;
        double* row = layer.weight.row(j);
        for (std::size_t k = 0; k < layer.weight.cols(); ++k) row[k] *= c;
        layer.bias[j] *= c;
      }
    }
  }
  Layer& last = net.layers.back();
  double norm = 0.0;
  for (std::size_t j = 0; j < last.weight.rows(); ++j) {
    norm = std::max(norm, l1_norm(last.weight.row(j), last.weight.cols()));
  }
  if (norm > net.norm_budget) {
    const double c = net.norm_budget / norm;
    for (std::size_t i = 0; i < last.weight.size(); ++i) last.weight.data()[i] *= c;
    for (double& b : last.bias) b *= c;
  }
  ++net.version;
}

}  // namespace invarep

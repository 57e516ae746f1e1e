#include "lpaf/analysis.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lpaf/error.hpp"
#include "lpaf/prune.hpp"

namespace lpaf {

std::size_t layer_flops(const LinearLayer& layer) {
  const std::size_t n = layer.out_features();
  const std::size_t m = layer.in_features();
  if (layer.kind == LayerKind::kFactorized) {
    return 2 * layer.factors.rank() * (n + m) + 2 * n;
  }
  return 2 * n * m + 2 * n;
}

std::size_t flops_per_sample(const MlpModel& model) {
  std::size_t total = 0;
  for (const auto& layer : model.layers) total += layer_flops(layer);
  return total;
}

std::size_t layer_parameters(const LinearLayer& layer) {
  const std::size_t n = layer.out_features();
  if (layer.kind == LayerKind::kFactorized) return layer.factors.parameter_count() + n;
  return layer.weight.size() + n;
}

ModelStats model_stats(const MlpModel& model, double rank_tolerance) {
  ModelStats out;
  out.rank_tolerance = rank_tolerance;
  double rank_sum = 0.0;
  std::size_t factorizable = 0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LinearLayer& layer = model.layers[l];
    LayerStats s;
    s.name = "layer" + std::to_string(l);
    s.kind = layer.kind;
    s.rows = layer.out_features();
    s.cols = layer.in_features();
    s.factorizable = l + 1 < model.layers.size();
    const Matrix w = layer.effective_weight();
    if (layer.kind == LayerKind::kFactorized) {
      s.rank_k = layer.factors.rank();
      s.nonzeros = count_nonzeros(layer.factors.a) + count_nonzeros(layer.factors.b);
    } else {
      s.nonzeros = count_nonzeros(w);
    }
    s.kept_fraction = static_cast<double>(s.nonzeros) / static_cast<double>(s.rows * s.cols);
    s.numerical_rank = numerical_rank(w, rank_tolerance);
    s.zero_row_fraction = zero_row_fraction(w);
    s.parameters = layer_parameters(layer);
    s.kept_parameters = s.nonzeros + s.rows;
    s.flops = layer_flops(layer);
    out.parameters += s.parameters;
    out.kept_parameters += s.kept_parameters;
    out.flops_per_sample += s.flops;
    if (s.factorizable) {
      rank_sum += static_cast<double>(s.numerical_rank);
      ++factorizable;
    }
    out.layers.push_back(std::move(s));
  }
  out.average_rank = factorizable > 0 ? rank_sum / static_cast<double>(factorizable) : 0.0;
  return out;
}

std::string model_stats_csv(const ModelStats& stats) {
  std::ostringstream os;
  os.precision(17);
  os << "layer,kind,rows,cols,k,nonzeros,kept_fraction,numerical_rank,zero_row_fraction,"
        "parameters,kept_parameters,flops,rank_tolerance\n";
  for (const auto& s : stats.layers) {
    os << s.name << ',' << to_string(s.kind) << ',' << s.rows << ',' << s.cols << ','
       << s.rank_k << ',' << s.nonzeros << ',' << s.kept_fraction << ',' << s.numerical_rank
       << ',' << s.zero_row_fraction << ',' << s.parameters << ',' << s.kept_parameters << ','
       << s.flops << ',' << stats.rank_tolerance << '\n';
  }
  os << "TOTAL,,,,,,," << stats.average_rank << ",," << stats.parameters << ','
     << stats.kept_parameters << ',' << stats.flops_per_sample << ','
     << stats.rank_tolerance << '\n';
  return os.str();
}

std::string mask_to_pgm(const Matrix& mask) {
  std::ostringstream os;
  os << "P2\n" << mask.cols() << ' ' << mask.rows() << "\n1\n";
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      if (j > 0) os << ' ';
      os << (mask(i, j) != 0.0 ? 1 : 0);
    }
    os << '\n';
  }
  return os.str();
}

std::string row_histogram_csv(const Matrix& mask) {
  std::ostringstream os;
  os << "row,nonzeros\n";
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    std::size_t count = 0;
    for (double x : mask.row(i)) count += x != 0.0 ? 1 : 0;
    os << i << ',' << count << '\n';
  }
  return os.str();
}

PatternExport sparsity_pattern_export(const LinearLayer& layer,
                                      const std::filesystem::path& directory,
                                      const std::string& stem) {
  if (layer.kind != LayerKind::kSparse || !layer.has_mask()) {
    throw Error(ErrorKind::kInvalidArgument, "export-pattern: layer is " +
                                                 std::string(to_string(layer.kind)) +
                                                 ", not sparse");
  }
  std::filesystem::create_directories(directory);
  PatternExport out;
  out.pgm = directory / (stem + ".pgm");
  out.histogram = directory / (stem + "_rows.csv");
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error(ErrorKind::kIo, "cannot write " + p.string());
    f << text;
    if (!f) throw Error(ErrorKind::kIo, "write failed for " + p.string());
  };
  write(out.pgm, mask_to_pgm(layer.mask));
  write(out.histogram, row_histogram_csv(layer.mask));
  for (std::size_t i = 0; i < layer.mask.rows(); ++i) {
    bool any = false;
    for (double x : layer.mask.row(i)) any = any || x != 0.0;
    (any ? out.nonzero_rows : out.zero_rows) += 1;
  }
  return out;
}

std::vector<ApproximationPoint> approximation_curves(std::span<const NamedMatrix> matrices,
                                                     std::span<const std::size_t> k_grid) {
  std::vector<ApproximationPoint> out;
  for (const auto& nm : matrices) {
    const SvdResult s = svd(nm.value);
    const double norm = frobenius_norm(nm.value);
    for (std::size_t k : k_grid) {
      if (k < 1 || k > s.rank()) {
        throw Error(ErrorKind::kInvalidArgument, nm.name + ": k " + std::to_string(k) +
                                                     " outside [1, " +
                                                     std::to_string(s.rank()) + "]");
      }
      ApproximationPoint p;
      p.matrix = nm.name;
      p.k = k;
      p.error = frobenius_error(nm.value, truncate(s, k));
      p.relative_error = norm > 0.0 ? p.error / norm : 0.0;
      p.cumulative_fraction = cumulative_singular_fraction(s, k);
      out.push_back(p);
    }
  }
  return out;
}

std::string approximation_curves_csv(std::span<const ApproximationPoint> points) {
  std::ostringstream os;
  os.precision(17);
  os << "matrix,k,frobenius_error,relative_error,cumulative_fraction\n";
  for (const auto& p : points) {
    os << p.matrix << ',' << p.k << ',' << p.error << ',' << p.relative_error << ','
       << p.cumulative_fraction << '\n';
  }
  return os.str();
}

}  // namespace lpaf

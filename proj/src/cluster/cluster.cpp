// Copyright 2026 The plcfe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "plcfe/cluster.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "plcfe/csv.hpp"
#include "plcfe/errors.hpp"

namespace plcfe {

namespace {

struct Nearest {
  std::uint32_t id;
  double dist2;
};

Nearest nearest_center(std::span<const double> x, const Matrix& centers) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = squared_distance(x, centers.row(c));
    if (d < best.dist2) best = {static_cast<std::uint32_t>(c), d};
  }
  return best;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centers(k, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(pick).begin(), points.row(pick).end(), centers.row(c).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(c)));
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      // All points coincide with chosen centers; any choice is equivalent.
      pick = static_cast<std::size_t>(rng.below(n));
      continue;
    }
    double target = rng.uniform() * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centers;
}

ClusterModel lloyd(const Matrix& points, std::size_t k, std::size_t max_iters, Rng& rng) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  ClusterModel model;
  model.k = k;
  model.centers = seed_plus_plus(points, k, rng);
  model.assignment.assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<double> dist2(n);

  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iters, 1); ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Nearest nn = nearest_center(points.row(i), model.centers);
      if (nn.id != model.assignment[i]) changed = true;
      model.assignment[i] = nn.id;
      dist2[i] = nn.dist2;
      inertia += nn.dist2;
    }
    model.inertia = inertia;
    model.inertia_trace.push_back(inertia);
    model.iterations = iter + 1;
    if (!changed) break;
    if (iter + 1 == max_iters) break;

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[model.assignment[i]];
      auto s = sums.row(model.assignment[i]);
      auto x = points.row(i);
      for (std::size_t c = 0; c < d; ++c) s[c] += x[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed at the worst-served point and hand it to this cluster.
        const auto far = static_cast<std::size_t>(
            std::max_element(dist2.begin(), dist2.end()) - dist2.begin());
        --counts[model.assignment[far]];
        auto old = sums.row(model.assignment[far]);
        for (std::size_t j = 0; j < d; ++j) old[j] -= points(far, j);
        model.assignment[far] = static_cast<std::uint32_t>(c);
        dist2[far] = 0.0;
        counts[c] = 1;
        std::copy(points.row(far).begin(), points.row(far).end(), sums.row(c).begin());
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // donor emptied by a re-seed; keep its center
      auto center = model.centers.row(c);
      auto s = sums.row(c);
      for (std::size_t j = 0; j < d; ++j) center[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  return model;
}

// Single-point moves that lower the inertia once centers are recomputed:
// moving x from a (size n_a) to b (size n_b) changes the inertia by
// n_b / (n_b + 1) |x - c_b|^2 - n_a / (n_a - 1) |x - c_a|^2. Runs to a
// fixed point or `max_passes`; every move keeps all clusters non-empty.
void refine_single_moves(const Matrix& points, ClusterModel& model, std::size_t max_passes) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  const std::size_t k = model.k;
  if (k < 2) return;
  auto recompute = [&](std::vector<std::size_t>& counts) {
    Matrix sums(k, d);
    counts.assign(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[model.assignment[i]];
      auto s = sums.row(model.assignment[i]);
      for (std::size_t j = 0; j < d; ++j) s[j] += points(i, j);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        model.centers(c, j) = sums(c, j) / static_cast<double>(counts[c]);
      }
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inertia += squared_distance(points.row(i), model.centers.row(model.assignment[i]));
    }
    model.inertia = inertia;
  };
  std::vector<std::size_t> counts;
  recompute(counts);
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t a = model.assignment[i];
      if (counts[a] < 2) continue;
      const auto na = static_cast<double>(counts[a]);
      const double remove = na / (na - 1.0) * squared_distance(points.row(i), model.centers.row(a));
      double best = remove;
      std::uint32_t target = a;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == a) continue;
        const auto nb = static_cast<double>(counts[b]);
        const double add = nb / (nb + 1.0) * squared_distance(points.row(i), model.centers.row(b));
        if (add < best) {
          best = add;
          target = static_cast<std::uint32_t>(b);
        }
      }
      if (target == a || best >= remove * (1.0 - 1e-12)) continue;
      const auto nb = static_cast<double>(counts[target]);
      for (std::size_t j = 0; j < d; ++j) {
        const double x = points(i, j);
        model.centers(a, j) = (na * model.centers(a, j) - x) / (na - 1.0);
        model.centers(target, j) = (nb * model.centers(target, j) + x) / (nb + 1.0);
      }
      --counts[a];
      ++counts[target];
      model.assignment[i] = target;
      moved = true;
    }
    if (!moved) break;
    recompute(counts);
    model.inertia_trace.push_back(model.inertia);
  }
}

}  // namespace

ClusterModel kmeans(const Matrix& points, std::size_t k, std::size_t max_iters,
                    std::size_t restarts, Rng& rng) {
  if (k == 0 || k > points.rows()) {
    throw ParameterError("k = " + std::to_string(k) + " must lie in [1, n = " +
                         std::to_string(points.rows()) + "]");
  }
  ClusterModel best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    ClusterModel m = lloyd(points, k, max_iters, rng);
    refine_single_moves(points, m, max_iters);
    m.restart = r;
    if (!have || m.inertia < best.inertia) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

PseudoLabeledDataset make_labeled_view(const Matrix& samples, std::vector<std::uint32_t> labels,
                                       std::size_t clusters) {
  if (labels.size() != samples.rows()) throw ShapeError("label count does not match samples");
  PseudoLabeledDataset out;
  out.samples = samples;
  out.members.resize(clusters);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= clusters) throw ParameterError("label id out of range");
    out.members[labels[i]].push_back(i);
  }
  out.labels = std::move(labels);
  return out;
}

PseudoLabeledDataset assign_pseudo_labels(const ClusterModel& model, const Dataset& dataset) {
  if (model.assignment.size() != dataset.size()) {
    throw ParameterError("cluster model does not cover the dataset");
  }
  return make_labeled_view(dataset.samples, model.assignment, model.k);
}

std::vector<std::size_t> nearest_clusters(const ClusterModel& model, std::size_t base,
                                          std::size_t k_bar) {
  if (base >= model.k) throw ParameterError("base cluster id out of range");
  if (k_bar >= model.k) {
    throw ParameterError("K_bar = " + std::to_string(k_bar) + " needs at least K_bar + 1 clusters");
  }
  std::vector<std::size_t> ids;
  std::vector<double> sim(model.k, 0.0);
  for (std::size_t c = 0; c < model.k; ++c) {
    if (c == base) continue;
    ids.push_back(c);
    sim[c] = dot(model.centers.row(base), model.centers.row(c));
  }
  std::stable_sort(ids.begin(), ids.end(),
                   [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  ids.resize(k_bar);
  return ids;
}

void write_cluster_model(const std::filesystem::path& assignments_path,
                         const std::filesystem::path& centers_path, const ClusterModel& model) {
  CsvWriter assign({"sample_index", "cluster_id"});
  for (std::size_t i = 0; i < model.assignment.size(); ++i) {
    assign.field(i).field(static_cast<std::size_t>(model.assignment[i]));
    assign.end_row();
  }
  assign.save(assignments_path);

  std::vector<std::string> header{"cluster_id"};
  for (std::size_t j = 0; j < model.centers.cols(); ++j) header.push_back("c" + std::to_string(j));
  CsvWriter centers(header);
  for (std::size_t c = 0; c < model.k; ++c) {
    centers.field(c);
    for (double v : model.centers.row(c)) centers.field(v, kExactDigits);
    centers.end_row();
  }
  centers.save(centers_path);
}

ClusterModel read_cluster_model(const std::filesystem::path& assignments_path,
                                const std::filesystem::path& centers_path,
                                const Matrix* points) {
  const CsvTable centers = read_csv(centers_path);
  ClusterModel model;
  model.k = centers.rows.size();
  if (model.k == 0) throw FormatError("centers file has no rows", 0);
  const std::size_t d = centers.header.size() - 1;
  model.centers = Matrix(model.k, d);
  for (std::size_t c = 0; c < model.k; ++c) {
    if (parse_int(centers.rows[c][0]) != static_cast<long long>(c)) {
      throw FormatError("centers must be listed in cluster id order", 0);
    }
    for (std::size_t j = 0; j < d; ++j) model.centers(c, j) = parse_real(centers.rows[c][j + 1]);
  }

  const CsvTable assign = read_csv(assignments_path);
  const std::size_t idx_col = assign.column("sample_index");
  const std::size_t id_col = assign.column("cluster_id");
  model.assignment.resize(assign.rows.size());
  for (std::size_t i = 0; i < assign.rows.size(); ++i) {
    if (parse_int(assign.rows[i][idx_col]) != static_cast<long long>(i)) {
      throw FormatError("assignments must be listed in sample order", 0);
    }
    const long long id = parse_int(assign.rows[i][id_col]);
    if (id < 0 || static_cast<std::size_t>(id) >= model.k) {
      throw FormatError("cluster id out of range in assignments", 0);
    }
    model.assignment[i] = static_cast<std::uint32_t>(id);
  }
  if (points != nullptr) {
    if (points->rows() != model.assignment.size()) {
      throw ShapeError("points do not match the stored assignment");
    }
    for (std::size_t i = 0; i < points->rows(); ++i) {
      model.inertia += squared_distance(points->row(i), model.centers.row(model.assignment[i]));
    }
  }
  return model;
}

}  // namespace plcfe

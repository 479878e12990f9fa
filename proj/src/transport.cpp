#include "otsmc/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <sstream>
#include <vector>

#include "otsmc/errors.hpp"

namespace otsmc {

CostMatrix build_cost_matrix(const Positions& positions) {
  const Eigen::Index n = positions.rows();
  CostMatrix cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cost(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double c = (positions.row(i) - positions.row(j)).squaredNorm();
      cost(i, j) = c;
      cost(j, i) = c;
    }
  }
  return cost;
}

Eigen::MatrixXd Coupling::dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(row_marginals.size(), col_marginals.size());
  for (const auto& c : entries) m(c.row, c.col) += c.mass;
  return m;
}

namespace {

// Primal network simplex specialised to the uncapacitated bipartite
// transportation graph. Sources are nodes [0, n), sinks [n, 2n), and node 2n
// is an artificial root joined to every node by an artificial arc. The
// spanning tree is stored with parent / thread / succ_num / last_succ arrays
// and pivots maintain a strongly feasible tree, which rules out cycling on
// degenerate pivots. Only tree arcs carry flow, so flow is kept per node
// (the flow on the arc to its parent).
class TransportSimplex {
 public:
  TransportSimplex(const CostMatrix& cost, const Vector& alpha, const Vector& beta)
      : cost_(cost.data()),
        n_(static_cast<std::int64_t>(cost.rows())),
        nodes_(2 * n_),
        root_(2 * n_),
        real_arcs_(n_ * n_) {
    const std::size_t all = static_cast<std::size_t>(nodes_ + 1);
    parent_.resize(all);
    pred_.resize(all);
    pred_dir_.resize(all);
    thread_.resize(all);
    rev_thread_.resize(all);
    succ_num_.resize(all);
    last_succ_.resize(all);
    pi_.resize(all);
    flow_.resize(all);
    supply_.resize(all);
    art_up_.resize(static_cast<std::size_t>(nodes_));
    state_.assign(static_cast<std::size_t>(real_arcs_ + nodes_), kLower);

    max_cost_ = 0.0;
    for (std::int64_t e = 0; e < real_arcs_; ++e) max_cost_ = std::max(max_cost_, std::abs(cost_[e]));
    art_cost_ = (max_cost_ + 1.0) * static_cast<double>(nodes_);

    double total = 0.0;
    for (std::int64_t i = 0; i < n_; ++i) {
      supply_[i] = alpha(i);
      supply_[n_ + i] = -beta(i);
      total += alpha(i) - beta(i);
    }
    supply_[root_] = -total;

    block_ = std::max<std::int64_t>(10, static_cast<std::int64_t>(std::sqrt(static_cast<double>(real_arcs_))));
    init_tree();
  }

  void run() {
    const std::int64_t refresh_period = std::max<std::int64_t>(nodes_, 64);
    for (;;) {
      if (!find_entering_arc()) {
        // Confirm against potentials rebuilt from the tree, free of drift.
        refresh_potentials();
        if (!find_entering_arc()) break;
      }
      pivot();
      if (++pivots_ % refresh_period == 0) refresh_potentials();
    }
    refresh_potentials();
    recompute_flows();
  }

  Coupling extract(const Vector& alpha, const Vector& beta) const {
    Coupling out;
    out.row_marginals = alpha;
    out.col_marginals = beta;
    out.pivots = static_cast<std::size_t>(pivots_);
    for (std::int64_t u = 0; u < nodes_; ++u) {
      const std::int64_t e = pred_[u];
      const double mass = flow_[u];
      if (e >= real_arcs_) {
        if (std::abs(mass) > 1e-9)
          throw CertificateFailure("solve_discrete_ot: artificial arc carries flow; problem infeasible");
        continue;
      }
      if (mass < -1e-12) throw CertificateFailure("solve_discrete_ot: negative mass in basic solution");
      if (mass <= kDropMass) continue;
      out.entries.push_back({static_cast<std::size_t>(e / n_), static_cast<std::size_t>(e % n_), mass});
    }
    std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    out.row_potentials.resize(n_);
    out.col_potentials.resize(n_);
    for (std::int64_t i = 0; i < n_; ++i) {
      out.row_potentials(i) = -pi_[i];
      out.col_potentials(i) = pi_[n_ + i];
    }
    for (const auto& c : out.entries) out.objective += c.mass * cost_[c.row * n_ + c.col];
    out.dual_objective = alpha.dot(out.row_potentials) + beta.dot(out.col_potentials);
    return out;
  }

 private:
  static constexpr int kUp = 1;
  static constexpr int kDown = -1;
  static constexpr signed char kTree = 0;
  static constexpr signed char kLower = 1;
  static constexpr double kDropMass = 1e-15;
  static constexpr double kPivotEps = 64 * std::numeric_limits<double>::epsilon();

  std::int64_t source(std::int64_t e) const {
    if (e < real_arcs_) return e / n_;
    const std::int64_t u = e - real_arcs_;
    return art_up_[u] ? u : root_;
  }
  std::int64_t target(std::int64_t e) const {
    if (e < real_arcs_) return n_ + e % n_;
    const std::int64_t u = e - real_arcs_;
    return art_up_[u] ? root_ : u;
  }
  double arc_cost(std::int64_t e) const {
    if (e < real_arcs_) return cost_[e];
    return art_up_[e - real_arcs_] ? 0.0 : art_cost_;
  }

  // Starting basis: each pair (source i, sink i) is joined by the diagonal
  // arc, and whichever end holds the pair's net imbalance hangs from the root
  // by an artificial arc. Zero-flow arcs all point away from the root, so the
  // tree is strongly feasible. When alpha and beta are close this is already
  // near optimal.
  void init_tree() {
    parent_[root_] = -1;
    pred_[root_] = -1;
    pred_dir_[root_] = 0;
    succ_num_[root_] = nodes_ + 1;
    pi_[root_] = 0.0;
    flow_[root_] = 0.0;
    for (std::int64_t u = 0; u < nodes_; ++u) {
      art_up_[u] = supply_[u] > 0 ? 1 : 0;
      state_[real_arcs_ + u] = kLower;
    }

    std::int64_t prev = root_;
    const auto link = [&](std::int64_t u) {
      thread_[prev] = u;
      rev_thread_[u] = prev;
      prev = u;
    };
    const auto hang_on_root = [&](std::int64_t u, double net) {
      parent_[u] = root_;
      pred_[u] = real_arcs_ + u;
      state_[real_arcs_ + u] = kTree;
      art_up_[u] = net > 0 ? 1 : 0;
      pred_dir_[u] = net > 0 ? kUp : kDown;
      flow_[u] = std::abs(net);
    };
    for (std::int64_t i = 0; i < n_; ++i) {
      const std::int64_t src = i;
      const std::int64_t snk = n_ + i;
      const std::int64_t diag = i * n_ + i;
      const double a = supply_[src];
      const double b = -supply_[snk];
      if (a > b) {
        // Source carries the excess up to the root; sink hangs below it.
        hang_on_root(src, a - b);
        parent_[snk] = src;
        pred_[snk] = diag;
        pred_dir_[snk] = kDown;
        flow_[snk] = b;
        state_[diag] = kTree;
        succ_num_[src] = 2;
        succ_num_[snk] = 1;
        last_succ_[src] = snk;
        last_succ_[snk] = snk;
        link(src);
        link(snk);
      } else if (a > 0) {
        // Root feeds the sink's shortfall; source hangs below the sink.
        hang_on_root(snk, -(b - a));
        parent_[src] = snk;
        pred_[src] = diag;
        pred_dir_[src] = kUp;
        flow_[src] = a;
        state_[diag] = kTree;
        succ_num_[snk] = 2;
        succ_num_[src] = 1;
        last_succ_[snk] = src;
        last_succ_[src] = src;
        link(snk);
        link(src);
      } else {
        // Empty source: a diagonal arc with zero flow would point at the
        // root, so both ends hang from the root directly.
        hang_on_root(src, 0.0);
        hang_on_root(snk, -b);
        succ_num_[src] = 1;
        succ_num_[snk] = 1;
        last_succ_[src] = src;
        last_succ_[snk] = snk;
        link(src);
        link(snk);
      }
    }
    thread_[prev] = root_;
    rev_thread_[root_] = prev;
    last_succ_[root_] = prev;
    refresh_potentials();
  }

  // Block search pivot rule: scan arcs cyclically in index order, one block
  // at a time, and take the most negative reduced cost of the first block
  // that has one. Deterministic for a given input.
  bool find_entering_arc() {
    double best = 0.0;
    std::int64_t best_arc = -1;
    std::int64_t count = block_;
    std::int64_t e = next_arc_;
    std::int64_t i = e / n_;
    std::int64_t j = e % n_;
    for (std::int64_t scanned = 0; scanned < real_arcs_; ++scanned) {
      if (state_[e] == kLower) {
        const double pi_s = pi_[i];
        const double pi_t = pi_[n_ + j];
        const double c = cost_[e];
        const double rc = c + pi_s - pi_t;
        if (rc < best) {
          const double scale = std::max({std::abs(c), std::abs(pi_s), std::abs(pi_t), 1.0});
          if (rc < -kPivotEps * scale) {
            best = rc;
            best_arc = e;
          }
        }
      }
      if (++j == n_) {
        j = 0;
        if (++i == n_) i = 0;
      }
      if (++e == real_arcs_) e = 0;
      if (--count == 0) {
        if (best_arc >= 0) break;
        count = block_;
      }
    }
    if (best_arc < 0) return false;
    in_arc_ = best_arc;
    next_arc_ = e;
    return true;
  }

  void pivot() {
    // Join node of the cycle closed by the entering arc.
    std::int64_t u = source(in_arc_);
    std::int64_t v = target(in_arc_);
    while (u != v) {
      if (succ_num_[u] < succ_num_[v]) {
        u = parent_[u];
      } else {
        v = parent_[v];
      }
    }
    join_ = u;

    // Leaving arc: the first side is scanned with a strict comparison and
    // the second with <=, which keeps the tree strongly feasible.
    const std::int64_t first = source(in_arc_);
    const std::int64_t second = target(in_arc_);
    delta_ = std::numeric_limits<double>::infinity();
    int result = 0;
    for (std::int64_t w = first; w != join_; w = parent_[w]) {
      if (pred_dir_[w] == kUp && flow_[w] < delta_) {
        delta_ = flow_[w];
        u_out_ = w;
        result = 1;
      }
    }
    for (std::int64_t w = second; w != join_; w = parent_[w]) {
      if (pred_dir_[w] == kDown && flow_[w] <= delta_) {
        delta_ = flow_[w];
        u_out_ = w;
        result = 2;
      }
    }
    if (result == 0) throw SolverFailure("solve_discrete_ot: unbounded pivot cycle");
    if (result == 1) {
      u_in_ = first;
      v_in_ = second;
    } else {
      u_in_ = second;
      v_in_ = first;
    }

    if (delta_ > 0) {
      for (std::int64_t w = first; w != join_; w = parent_[w]) flow_[w] -= pred_dir_[w] * delta_;
      for (std::int64_t w = second; w != join_; w = parent_[w]) flow_[w] += pred_dir_[w] * delta_;
    }
    state_[in_arc_] = kTree;
    state_[pred_[u_out_]] = kLower;

    update_tree();
    update_potentials();
  }

  void update_tree() {
    const std::int64_t old_rev_thread = rev_thread_[u_out_];
    const std::int64_t old_succ_num = succ_num_[u_out_];
    const std::int64_t old_last_succ = last_succ_[u_out_];
    v_out_ = parent_[u_out_];

    if (u_in_ == u_out_) {
      parent_[u_in_] = v_in_;
      pred_[u_in_] = in_arc_;
      pred_dir_[u_in_] = u_in_ == source(in_arc_) ? kUp : kDown;
      flow_[u_in_] = delta_;
      if (thread_[v_in_] != u_out_) {
        std::int64_t after = thread_[old_last_succ];
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
        after = thread_[v_in_];
        thread_[v_in_] = u_out_;
        rev_thread_[u_out_] = v_in_;
        thread_[old_last_succ] = after;
        rev_thread_[after] = old_last_succ;
      }
    } else {
      const std::int64_t thread_continue =
          old_rev_thread == v_in_ ? thread_[old_last_succ] : thread_[v_in_];

      // Re-hang the stem u_in .. u_out below v_in, splicing thread lists.
      std::int64_t stem = u_in_;
      std::int64_t par_stem = v_in_;
      std::int64_t last = last_succ_[u_in_];
      std::int64_t after = thread_[last];
      thread_[v_in_] = u_in_;
      dirty_revs_.clear();
      dirty_revs_.push_back(v_in_);
      while (stem != u_out_) {
        const std::int64_t next_stem = parent_[stem];
        thread_[last] = next_stem;
        dirty_revs_.push_back(last);

        const std::int64_t before = rev_thread_[stem];
        thread_[before] = after;
        rev_thread_[after] = before;

        parent_[stem] = par_stem;
        par_stem = stem;
        stem = next_stem;

        last = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
        after = thread_[last];
      }
      parent_[u_out_] = par_stem;
      thread_[last] = thread_continue;
      rev_thread_[thread_continue] = last;
      last_succ_[u_out_] = last;

      if (old_rev_thread != v_in_) {
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
      }
      for (const std::int64_t w : dirty_revs_) rev_thread_[thread_[w]] = w;

      // Shift pred arcs (and their flows) one step along the reversed stem.
      std::int64_t tmp_sc = 0;
      const std::int64_t tmp_ls = last_succ_[u_out_];
      for (std::int64_t w = u_out_, p = parent_[w]; w != u_in_; w = p, p = parent_[w]) {
        pred_[w] = pred_[p];
        pred_dir_[w] = -pred_dir_[p];
        flow_[w] = flow_[p];
        tmp_sc += succ_num_[w] - succ_num_[p];
        succ_num_[w] = tmp_sc;
        last_succ_[p] = tmp_ls;
      }
      pred_[u_in_] = in_arc_;
      pred_dir_[u_in_] = u_in_ == source(in_arc_) ? kUp : kDown;
      flow_[u_in_] = delta_;
      succ_num_[u_in_] = old_succ_num;
    }

    const std::int64_t up_limit_out = last_succ_[join_] == v_in_ ? join_ : -1;
    const std::int64_t last_succ_out = last_succ_[u_out_];
    for (std::int64_t w = v_in_; w != -1 && last_succ_[w] == v_in_; w = parent_[w]) {
      last_succ_[w] = last_succ_out;
    }
    if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
      for (std::int64_t w = v_out_; w != up_limit_out && last_succ_[w] == old_last_succ; w = parent_[w]) {
        last_succ_[w] = old_rev_thread;
      }
    } else if (last_succ_out != old_last_succ) {
      for (std::int64_t w = v_out_; w != up_limit_out && last_succ_[w] == old_last_succ; w = parent_[w]) {
        last_succ_[w] = last_succ_out;
      }
    }
    for (std::int64_t w = v_in_; w != join_; w = parent_[w]) succ_num_[w] += old_succ_num;
    for (std::int64_t w = v_out_; w != join_; w = parent_[w]) succ_num_[w] -= old_succ_num;
  }

  void update_potentials() {
    const double sigma = pi_[v_in_] - pi_[u_in_] - pred_dir_[u_in_] * arc_cost(in_arc_);
    const std::int64_t end = thread_[last_succ_[u_in_]];
    for (std::int64_t w = u_in_; w != end; w = thread_[w]) pi_[w] += sigma;
  }

  // Potentials from scratch along the tree in preorder.
  void refresh_potentials() {
    for (std::int64_t u = thread_[root_]; u != root_; u = thread_[u]) {
      pi_[u] = pi_[parent_[u]] - pred_dir_[u] * arc_cost(pred_[u]);
    }
  }

  // Tree flows from the supplies by leaf elimination, discarding the
  // rounding accumulated over pivots.
  void recompute_flows() {
    std::vector<double> net(supply_);
    for (std::int64_t u = rev_thread_[root_]; u != root_; u = rev_thread_[u]) {
      flow_[u] = pred_dir_[u] * net[u];
      net[parent_[u]] += net[u];
    }
  }

  const double* cost_;
  std::int64_t n_;
  std::int64_t nodes_;
  std::int64_t root_;
  std::int64_t real_arcs_;
  std::int64_t block_ = 0;
  double max_cost_ = 0.0;
  double art_cost_ = 0.0;

  std::vector<std::int64_t> parent_, pred_, thread_, rev_thread_, succ_num_, last_succ_;
  std::vector<int> pred_dir_;
  std::vector<double> pi_, flow_, supply_;
  std::vector<signed char> state_;
  std::vector<unsigned char> art_up_;
  std::vector<std::int64_t> dirty_revs_;

  std::int64_t next_arc_ = 0;
  std::int64_t in_arc_ = -1, join_ = -1, u_in_ = -1, v_in_ = -1, u_out_ = -1, v_out_ = -1;
  double delta_ = 0.0;
  std::int64_t pivots_ = 0;
};

void check_marginal(const Eigen::Ref<const Vector>& m, std::size_t n, const char* name) {
  if (static_cast<std::size_t>(m.size()) != n) {
    std::ostringstream msg;
    msg << "solve_discrete_ot: " << name << " has length " << m.size() << ", expected " << n;
    throw MarginalMismatch(msg.str());
  }
  if (!m.allFinite() || (m.array() < 0).any()) {
    throw MarginalMismatch(std::string("solve_discrete_ot: ") + name + " must be finite and nonnegative");
  }
  if (std::abs(m.sum() - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "solve_discrete_ot: " << name << " sums to " << m.sum() << ", not 1";
    throw MarginalMismatch(msg.str());
  }
}

}  // namespace

CertificateReport check_certificate(const CostMatrix& cost, const Coupling& coupling, double tol) {
  CertificateReport r;
  const auto n = static_cast<Eigen::Index>(coupling.size());
  Vector rows = Vector::Zero(n);
  Vector cols = Vector::Zero(n);
  double max_cost = 0.0;
  for (Eigen::Index e = 0; e < cost.size(); ++e) max_cost = std::max(max_cost, std::abs(cost.data()[e]));
  const double dual_tol = tol * std::max(1.0, max_cost);
  bool positive = true;
  for (const auto& c : coupling.entries) {
    rows(c.row) += c.mass;
    cols(c.col) += c.mass;
    positive = positive && c.mass > 0;
    const double slack = coupling.row_potentials(c.row) + coupling.col_potentials(c.col) - cost(c.row, c.col);
    r.max_slackness = std::max(r.max_slackness, std::abs(slack));
  }
  r.max_row_error = (rows - coupling.row_marginals).cwiseAbs().maxCoeff();
  r.max_col_error = (cols - coupling.col_marginals).cwiseAbs().maxCoeff();
  double violation = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      violation = std::max(violation, coupling.row_potentials(i) + coupling.col_potentials(j) - cost(i, j));
    }
  }
  r.max_dual_violation = violation;
  r.duality_gap = std::abs(coupling.objective - coupling.dual_objective);
  r.support = coupling.entries.size();
  r.ok = positive && r.max_row_error <= tol && r.max_col_error <= tol && r.max_dual_violation <= dual_tol &&
         r.max_slackness <= dual_tol && r.duality_gap <= dual_tol &&
         r.support <= static_cast<std::size_t>(std::max<Eigen::Index>(1, 2 * n - 1));
  return r;
}

Coupling solve_discrete_ot(const CostMatrix& cost, const Eigen::Ref<const Vector>& alpha,
                           const Eigen::Ref<const Vector>& beta) {
  if (cost.rows() != cost.cols() || cost.rows() < 1)
    throw std::invalid_argument("solve_discrete_ot: cost matrix must be square and non-empty");
  if (!cost.allFinite()) throw std::invalid_argument("solve_discrete_ot: non-finite cost");
  const auto n = static_cast<std::size_t>(cost.rows());
  check_marginal(alpha, n, "alpha");
  check_marginal(beta, n, "beta");

  const Vector a = alpha;
  const Vector b = beta;
  TransportSimplex simplex(cost, a, b);
  simplex.run();
  Coupling plan = simplex.extract(a, b);

  const CertificateReport report = check_certificate(cost, plan);
  if (!report.ok) {
    std::ostringstream msg;
    msg << "solve_discrete_ot: certificate failed (row err " << report.max_row_error << ", col err "
        << report.max_col_error << ", dual violation " << report.max_dual_violation << ", slackness "
        << report.max_slackness << ", gap " << report.duality_gap << ", support " << report.support << ")";
    throw CertificateFailure(msg.str());
  }
  return plan;
}

Ensemble ensemble_transform(const Ensemble& e, const Eigen::Ref<const Vector>& beta, Coupling* plan_out) {
  const CostMatrix cost = build_cost_matrix(e.positions());
  Coupling plan = solve_discrete_ot(cost, e.weights(), beta);

  const auto& u = e.positions();
  Vector row_mass = Vector::Zero(u.rows());
  for (const auto& c : plan.entries) row_mass(c.row) += c.mass;
  // Conditional weights C_ij / (realised row sum) make every output an exact
  // convex combination of the inputs; a single-entry row copies its target
  // bit for bit. Rows with no surviving mass stay put.
  Positions moved = Positions::Zero(u.rows(), u.cols());
  for (const auto& c : plan.entries) moved.row(c.row) += (c.mass / row_mass(c.row)) * u.row(c.col);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    if (!(row_mass(i) > 0)) moved.row(i) = u.row(i);
  }
  if (plan_out != nullptr) *plan_out = std::move(plan);
  return e.with_positions(std::move(moved));
}

Ensemble ensemble_transform(const Ensemble& e, const Eigen::Ref<const Vector>& beta) {
  return ensemble_transform(e, beta, nullptr);
}

Ensemble apply_bayes_transform(const Ensemble& e, const Eigen::Ref<const Vector>& dV, double dtau) {
  // A constant potential cancels in the normalisation.
  if (dtau == 0 || (dV.array() == dV(0)).all()) return e;
  const Ensemble target = reweight(e, dV, dtau);
  return ensemble_transform(e, target.weights());
}

void write_coupling_csv(std::ostream& out, const Coupling& coupling) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  out << "i,j,mass\n";
  for (const auto& c : coupling.entries) out << c.row << ',' << c.col << ',' << c.mass << '\n';
  out.precision(old_precision);
}

}  // namespace otsmc

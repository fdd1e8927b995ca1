// Differentiable store-then-query evaluation of one task. The MLP forwards
// and the decoder live on the tape; the sketch phase runs as plain f64
// linear algebra whose backward is spliced in through one custom node:
//   - every store/carry add is Sum_e c_e * (Eo[o_e] Ed[d_e]^T + eps) with
//     carry factors folded into constant per-(layer, edge) coefficients, so
//     one 64x64 gradient accumulator per layer routes the whole store phase;
//   - every query caches its argmin cell, so backward touches one cell per
//     (edge, layer) instead of a materialized basis.
// This keeps tape memory independent of stream length (bases are never
// materialized on the tape).

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "crane/baselines.hpp"
#include "crane/kernels.hpp"
#include "crane/tape.hpp"
#include "crane/training.hpp"

namespace crane {

namespace {

struct RoleIndex {
  std::vector<std::uint32_t> ids;   // distinct, first appearance
  std::vector<std::uint32_t> row;   // per support occurrence
};

RoleIndex build_role_index(const std::vector<EdgeUpdate>& support, bool origin) {
  RoleIndex out;
  out.row.resize(support.size());
  std::unordered_map<std::uint32_t, std::uint32_t> map;
  map.reserve(support.size() * 2);
  for (std::size_t i = 0; i < support.size(); ++i) {
    const std::uint32_t id = origin ? support[i].origin : support[i].destination;
    auto [it, fresh] =
        map.try_emplace(id, static_cast<std::uint32_t>(out.ids.size()));
    if (fresh) out.ids.push_back(id);
    out.row[i] = it->second;
  }
  return out;
}

Tensor codes_for(const std::vector<std::uint32_t>& ids) {
  Tensor codes(ids.size(), kCodeBits);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto c = binary_encode(ids[i]);
    for (std::size_t k = 0; k < kCodeBits; ++k) codes.at(i, k) = c[k];
  }
  return codes;
}

double eval_task(CraneModel& model, const Task& task, std::size_t b_size,
                 std::vector<Tensor>* grads, double grad_scale) {
  if (task.support.empty())
    throw std::invalid_argument("run_task: empty support stream");
  if (task.queries.size() != task.truths.size())
    throw std::invalid_argument("run_task: query/truth length mismatch");
  if (b_size < 1) throw std::invalid_argument("run_task: b_size must be >= 1");
  const std::uint32_t n_layers = model.n_max;
  const std::size_t n_sup = task.support.size();
  const std::size_t n_q = task.queries.size();
  const double theta = model.theta, eps = model.eps;
  constexpr std::size_t D = kEmbedDim;
  constexpr std::size_t cells = D * D;

  // --- index nodes and edges ---------------------------------------------
  RoleIndex oidx = build_role_index(task.support, true);
  RoleIndex didx = build_role_index(task.support, false);
  std::unordered_map<std::uint64_t, std::uint32_t> edge_map;
  edge_map.reserve(n_q * 2);
  std::vector<std::uint32_t> q_orow(n_q), q_drow(n_q);
  {
    std::unordered_map<std::uint32_t, std::uint32_t> omap, dmap;
    omap.reserve(oidx.ids.size() * 2);
    dmap.reserve(didx.ids.size() * 2);
    for (std::size_t i = 0; i < oidx.ids.size(); ++i) omap[oidx.ids[i]] = i;
    for (std::size_t i = 0; i < didx.ids.size(); ++i) dmap[didx.ids[i]] = i;
    for (std::size_t k = 0; k < n_q; ++k) {
      const auto& e = task.queries[k];
      edge_map[edge_key64(e.origin, e.destination)] =
          static_cast<std::uint32_t>(k);
      const auto io = omap.find(e.origin);
      const auto id = dmap.find(e.destination);
      if (io == omap.end() || id == dmap.end())
        throw std::invalid_argument("run_task: query edge not in support");
      q_orow[k] = io->second;
      q_drow[k] = id->second;
    }
  }
  std::vector<std::uint32_t> edge_of(n_sup);
  for (std::size_t i = 0; i < n_sup; ++i) {
    const auto it = edge_map.find(
        edge_key64(task.support[i].origin, task.support[i].destination));
    if (it == edge_map.end())
      throw std::invalid_argument("run_task: support edge missing from queries");
    edge_of[i] = it->second;
  }

  // --- tape: parameters and embeddings ------------------------------------
  Tape tape;
  auto params = model.param_list();
  std::vector<ValueId> leaves;
  leaves.reserve(params.size());
  for (Tensor* p : params) leaves.push_back(tape.leaf(*p, grads != nullptr));
  const ValueId codes_o = tape.leaf(codes_for(oidx.ids), false);
  const ValueId codes_d = tape.leaf(codes_for(didx.ids), false);

  std::vector<ValueId> eo_nodes(n_layers), ed_nodes(n_layers);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    std::array<ValueId, 10> po{}, pd{};
    for (int k = 0; k < 10; ++k) {
      po[k] = leaves[static_cast<std::size_t>(i) * 20 + k];
      pd[k] = leaves[static_cast<std::size_t>(i) * 20 + 10 + k];
    }
    eo_nodes[i] = model.enc_o[i].forward_tape(tape, codes_o, po, true);
    ed_nodes[i] = model.enc_d[i].forward_tape(tape, codes_d, pd, true);
  }
  const ValueId w_leaf = leaves[params.size() - 2];
  const ValueId b_leaf = leaves[params.size() - 1];

  // --- store phase (values only; coefficients recorded for backward) ------
  std::vector<Tensor> mem(n_layers, Tensor(D, D));
  std::vector<std::vector<double>> coef(n_layers,
                                        std::vector<double>(n_q, 0.0));
  Tensor agg(D, D), agg_next(D, D);
  for (std::size_t b0 = 0; b0 < n_sup; b0 += b_size) {
    const std::size_t b1 = std::min(b0 + b_size, n_sup);
    std::fill(agg.v.begin(), agg.v.end(), 0.0);
    double batch_weight = 0.0;
    const double* EoV = tape.val(eo_nodes[0]).data();
    const double* EdV = tape.val(ed_nodes[0]).data();
    for (std::size_t l = b0; l < b1; ++l) {
      const double w = task.support[l].weight;
      kernels::outer_axpy(agg.data(), EoV + oidx.row[l] * D,
                          EdV + didx.row[l] * D, D, D, w, eps,
                          kernels::Exec::serial);
      coef[0][edge_of[l]] += w;
      batch_weight += w;
    }
    for (std::size_t c = 0; c < cells; ++c) mem[0].v[c] += agg.v[c];
    if (batch_weight <= 0.0) continue;
    for (std::uint32_t i = 0; i + 1 < n_layers; ++i) {
      const auto r = kernels::min_ratio(mem[i].data(), agg.data(), cells);
      const double t = floor_div_clip(r.value, theta);
      if (t <= 0.0) break;
      std::fill(agg_next.v.begin(), agg_next.v.end(), 0.0);
      const double* EoN = tape.val(eo_nodes[i + 1]).data();
      const double* EdN = tape.val(ed_nodes[i + 1]).data();
      for (std::size_t l = b0; l < b1; ++l) {
        const double w = task.support[l].weight;
        kernels::outer_axpy(agg_next.data(), EoN + oidx.row[l] * D,
                            EdN + didx.row[l] * D, D, D, w, eps,
                            kernels::Exec::serial);
        coef[i + 1][edge_of[l]] += t * w;
        coef[i][edge_of[l]] -= theta * t * w;
      }
      for (std::size_t c = 0; c < cells; ++c) {
        mem[i + 1].v[c] += t * agg_next.v[c];
        mem[i].v[c] -= theta * t * agg.v[c];
      }
      std::swap(agg, agg_next);
    }
  }

  // --- query phase ---------------------------------------------------------
  Tensor Q(n_q, n_layers);
  std::vector<kernels::MinRatio> scans(
      grads ? n_q * n_layers : n_q);  // keep per-layer records when training
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    kernels::MinRatio* out = grads ? scans.data() + i * n_q : scans.data();
    kernels::batch_min_ratio_basis(
        mem[i].data(), D, D, tape.val(eo_nodes[i]).data(), D,
        tape.val(ed_nodes[i]).data(), D, q_orow.data(), q_drow.data(), n_q, eps,
        out, tape.exec());
    for (std::size_t k = 0; k < n_q; ++k) Q.at(k, i) = out[k].value;
  }

  ValueId q_node;
  if (grads) {
    // splice the sketch backward into the tape sweep
    q_node = tape.custom(
        std::move(Q), {},
        [&, n_layers, n_q](Tape& tp, Node& node) {
          const Tensor& gq = node.grad;
          Tensor G(D, D);
          std::vector<std::uint32_t> idx;
          std::vector<double> cvals;
          for (std::uint32_t i = 0; i < n_layers; ++i) {
            std::fill(G.v.begin(), G.v.end(), 0.0);
            Tensor& dEo = tp.grad(eo_nodes[i]);
            Tensor& dEd = tp.grad(ed_nodes[i]);
            const double* EoV = tp.val(eo_nodes[i]).data();
            const double* EdV = tp.val(ed_nodes[i]).data();
            const kernels::MinRatio* rec = scans.data() + i * n_q;
            for (std::size_t k = 0; k < n_q; ++k) {
              const double g = gq.at(k, i);
              if (g == 0.0) continue;
              const std::size_t p = rec[k].index / D, q = rec[k].index % D;
              G.v[rec[k].index] += g / rec[k].a_star;
              const double da = -g * rec[k].value / rec[k].a_star;
              dEo.v[q_orow[k] * D + p] += da * EdV[q_drow[k] * D + q];
              dEd.v[q_drow[k] * D + q] += da * EoV[q_orow[k] * D + p];
            }
            idx.clear();
            cvals.clear();
            for (std::size_t e = 0; e < n_q; ++e)
              if (coef[i][e] != 0.0) {
                idx.push_back(static_cast<std::uint32_t>(e));
                cvals.push_back(coef[i][e]);
              }
            if (idx.empty()) continue;
            std::vector<std::uint32_t> ro(idx.size()), rd(idx.size());
            for (std::size_t e = 0; e < idx.size(); ++e) {
              ro[e] = q_orow[idx[e]];
              rd[e] = q_drow[idx[e]];
            }
            kernels::batch_route_outer_grad(G.data(), D, D, EoV, D, EdV, D,
                                            ro.data(), rd.data(), cvals.data(),
                                            idx.size(), dEo.data(), dEd.data(),
                                            tp.exec());
          }
        });
  } else {
    q_node = tape.leaf(std::move(Q), false);
  }

  ValueId pred = tape.matmul(q_node, w_leaf);
  pred = tape.add_rowvec(pred, b_leaf);
  Tensor truth_t(n_q, 1);
  for (std::size_t k = 0; k < n_q; ++k) truth_t.v[k] = task.truths[k];
  const ValueId truth = tape.leaf(std::move(truth_t), false);
  const ValueId loss = tape.mae_loss(pred, truth);
  const double loss_v = tape.val(loss).v[0];

  if (grads) {
    tape.backward(loss);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const Tensor& g = tape.node(leaves[k]).grad;
      if (g.numel() == 0) continue;
      Tensor& acc = (*grads)[k];
      for (std::size_t c = 0; c < g.numel(); ++c)
        acc.v[c] += grad_scale * g.v[c];
    }
  }
  return loss_v;
}

}  // namespace

double run_task(CraneModel& model, const Task& task, std::size_t b_size,
                std::vector<Tensor>& grads, double grad_scale) {
  return eval_task(model, task, b_size, &grads, grad_scale);
}

double run_task_loss(CraneModel& model, const Task& task, std::size_t b_size) {
  return eval_task(model, task, b_size, nullptr, 0.0);
}

}  // namespace crane

#include "crane/sketch.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "crane/kernels.hpp"

namespace crane {

CraneModel CraneModel::init(std::uint32_t n_max, double theta, double tau,
                            double eps, std::uint64_t seed, bool tied_layers) {
  if (n_max < 1) throw std::invalid_argument("model: n_max must be >= 1");
  if (!(theta > 1.0)) throw std::invalid_argument("model: theta must be > 1");
  if (!(tau > 0.0)) throw std::invalid_argument("model: tau must be > 0");
  if (!(eps > 0.0)) throw std::invalid_argument("model: eps must be > 0");
  CraneModel m;
  m.n_max = n_max;
  m.theta = theta;
  m.tau = tau;
  m.eps = eps;
  m.enc_o.resize(n_max);
  m.enc_d.resize(n_max);
  SplitMix64 master(seed);
  const std::uint64_t o0 = master.next(), d0 = master.next();
  for (std::uint32_t i = 0; i < n_max; ++i) {
    std::uint64_t so = tied_layers ? o0 : (i == 0 ? o0 : master.next());
    std::uint64_t sd = tied_layers ? d0 : (i == 0 ? d0 : master.next());
    Xoshiro256ss ro(so), rd(sd);
    m.enc_o[i].init(ro);
    m.enc_d[i].init(rd);
  }
  m.dec_w = Tensor(n_max, 1);
  for (std::uint32_t i = 0; i < n_max; ++i)
    m.dec_w.v[i] = std::pow(theta, static_cast<double>(i));
  m.dec_b = Tensor(1, 1);
  return m;
}

std::vector<Tensor*> CraneModel::param_list() {
  std::vector<Tensor*> out;
  for (std::uint32_t i = 0; i < n_max; ++i) {
    for (Tensor* t : enc_o[i].param_list()) out.push_back(t);
    for (Tensor* t : enc_d[i].param_list()) out.push_back(t);
  }
  out.push_back(&dec_w);
  out.push_back(&dec_b);
  return out;
}

std::vector<const Tensor*> CraneModel::param_list() const {
  std::vector<const Tensor*> out;
  for (std::uint32_t i = 0; i < n_max; ++i) {
    for (const Tensor* t : enc_o[i].param_list()) out.push_back(t);
    for (const Tensor* t : enc_d[i].param_list()) out.push_back(t);
  }
  out.push_back(&dec_w);
  out.push_back(&dec_b);
  return out;
}

CraneSketch::CraneSketch(const CraneModel& model, SketchConfig cfg,
                         std::uint32_t active_layers)
    : model_(&model), cfg_(cfg) {
  if (active_layers < 1 || active_layers > model.n_max)
    throw std::invalid_argument("sketch: active layer count out of range");
  if (cfg.b_size < 1) throw std::invalid_argument("sketch: b_size must be >= 1");
  memories_.assign(active_layers, Tensor(kEmbedDim, kEmbedDim));
  pattern_mass_.assign(active_layers, 0.0);
}

Tensor CraneSketch::embed_layers(std::uint32_t id, bool origin_role,
                                 std::uint32_t n_layers) const {
  Tensor codes(1, kCodeBits);
  const auto c = binary_encode(id);
  for (std::size_t k = 0; k < kCodeBits; ++k) codes.v[k] = c[k];
  Tensor out(n_layers, kEmbedDim);
  Tensor row;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const EncoderNet& enc = origin_role ? model_->enc_o[i] : model_->enc_d[i];
    enc.forward_infer(codes, row);
    for (std::size_t j = 0; j < kEmbedDim; ++j) out.at(i, j) = row.v[j];
  }
  return out;
}

void CraneSketch::clamp_nonneg(Tensor& m) {
  for (auto& x : m.v)
    if (x < 0.0) x = 0.0;
}

void CraneSketch::store(const EdgeUpdate& e) {
  if (e.weight < 0.0) throw std::invalid_argument("store: negative weight");
  const Tensor eo = embed_layers(e.origin, true, 1);
  const Tensor ed = embed_layers(e.destination, false, 1);
  kernels::outer_axpy(memories_[0].data(), eo.data(), ed.data(), kEmbedDim,
                      kEmbedDim, e.weight, model_->eps,
                      kernels::Exec::serial);
  pattern_mass_[0] += e.weight;
  if (e.weight > 0.0) carry_chain_sequential(e, eo, ed);
  if (cfg_.auto_expand) expand_if_saturated();
}

void CraneSketch::carry_chain_sequential(const EdgeUpdate& e, const Tensor& eo1,
                                         const Tensor& ed1) {
  const double theta = model_->theta;
  Tensor eo = eo1, ed = ed1;
  // Subtractions and promotions go through a materialized basis so that a
  // singleton unit-weight mini-batch replays the exact same float ops.
  for (std::uint32_t i = 0; i + 1 < active_layers(); ++i) {
    const auto r = kernels::min_ratio_basis(memories_[i].data(), eo.data(),
                                            ed.data(), kEmbedDim, kEmbedDim,
                                            model_->eps);
    const double t = floor_div_clip(r.value, theta);
    if (t <= 0.0) return;
    const Tensor a_i = basis(eo, ed, model_->eps);
    const Tensor eo_up = embed_layers(e.origin, true, i + 2);
    const Tensor ed_up = embed_layers(e.destination, false, i + 2);
    Tensor eo_next(1, kEmbedDim), ed_next(1, kEmbedDim);
    for (std::size_t j = 0; j < kEmbedDim; ++j) {
      eo_next.v[j] = eo_up.at(i + 1, j);
      ed_next.v[j] = ed_up.at(i + 1, j);
    }
    const Tensor a_next = basis(eo_next, ed_next, model_->eps);
    for (std::size_t c = 0; c < a_next.numel(); ++c)
      memories_[i + 1].v[c] += t * a_next.v[c];
    for (std::size_t c = 0; c < a_i.numel(); ++c)
      memories_[i].v[c] -= theta * t * a_i.v[c];
    clamp_nonneg(memories_[i]);
    pattern_mass_[i] -= theta * t;
    pattern_mass_[i + 1] += t;
    eo = eo_next;
    ed = ed_next;
  }
}

void CraneSketch::store_batch(std::span<const EdgeUpdate> batch) {
  if (batch.empty()) throw std::invalid_argument("store_batch: empty batch");
  double batch_weight = 0.0;
  for (const auto& e : batch) {
    if (e.weight < 0.0) throw std::invalid_argument("store_batch: negative weight");
    batch_weight += e.weight;
  }
  // A_B at layer 1
  Tensor agg(kEmbedDim, kEmbedDim);
  std::vector<Tensor> eo_cache, ed_cache;
  eo_cache.reserve(batch.size());
  ed_cache.reserve(batch.size());
  for (const auto& e : batch) {
    eo_cache.push_back(embed_layers(e.origin, true, 1));
    ed_cache.push_back(embed_layers(e.destination, false, 1));
    kernels::outer_axpy(agg.data(), eo_cache.back().data(),
                        ed_cache.back().data(), kEmbedDim, kEmbedDim, e.weight,
                        model_->eps, kernels::Exec::serial);
  }
  for (std::size_t c = 0; c < agg.numel(); ++c) memories_[0].v[c] += agg.v[c];
  pattern_mass_[0] += batch_weight;
  if (batch_weight > 0.0)
    carry_chain_minibatch(batch, std::move(agg), batch_weight);
  if (cfg_.auto_expand) expand_if_saturated();
}

void CraneSketch::carry_chain_minibatch(std::span<const EdgeUpdate> batch,
                                        Tensor agg, double batch_weight) {
  const double theta = model_->theta;
  for (std::uint32_t i = 0; i + 1 < active_layers(); ++i) {
    const auto r =
        kernels::min_ratio(memories_[i].data(), agg.data(), agg.numel());
    const double t = floor_div_clip(r.value, theta);
    if (t <= 0.0) return;
    // re-encode the batch's aggregated basis at the destination layer
    Tensor agg_next(kEmbedDim, kEmbedDim);
    for (const auto& e : batch) {
      const Tensor eo = embed_layers(e.origin, true, i + 2);
      const Tensor ed = embed_layers(e.destination, false, i + 2);
      kernels::outer_axpy(agg_next.data(), eo.data() + (i + 1) * kEmbedDim,
                          ed.data() + (i + 1) * kEmbedDim, kEmbedDim, kEmbedDim,
                          e.weight, model_->eps, kernels::Exec::serial);
    }
    for (std::size_t c = 0; c < agg_next.numel(); ++c)
      memories_[i + 1].v[c] += t * agg_next.v[c];
    for (std::size_t c = 0; c < agg.numel(); ++c)
      memories_[i].v[c] -= theta * t * agg.v[c];
    clamp_nonneg(memories_[i]);
    pattern_mass_[i] -= theta * t * batch_weight;
    pattern_mass_[i + 1] += t * batch_weight;
    agg = std::move(agg_next);
  }
}

void CraneSketch::ingest(std::span<const EdgeUpdate> stream) {
  if (cfg_.mode == CarryMode::sequential) {
    for (const auto& e : stream) store(e);
    return;
  }
  for (std::size_t off = 0; off < stream.size(); off += cfg_.b_size)
    store_batch(stream.subspan(off, std::min(cfg_.b_size, stream.size() - off)));
}

void CraneSketch::expand_if_saturated() {
  const Tensor& top = memories_.back();
  const double lambda = top.sum() / static_cast<double>(top.numel());
  if (lambda > model_->tau && active_layers() < model_->n_max) {
    memories_.emplace_back(kEmbedDim, kEmbedDim);
    pattern_mass_.push_back(0.0);
  }
}

std::vector<double> CraneSketch::query_vector(EdgeKey e) const {
  const std::uint32_t L = active_layers();
  const Tensor eo = embed_layers(e.origin, true, L);
  const Tensor ed = embed_layers(e.destination, false, L);
  std::vector<double> q(model_->n_max, 0.0);
  for (std::uint32_t i = 0; i < L; ++i) {
    const auto r = kernels::min_ratio_basis(
        memories_[i].data(), eo.data() + i * kEmbedDim,
        ed.data() + i * kEmbedDim, kEmbedDim, kEmbedDim, model_->eps);
    q[i] = r.value;
  }
  return q;
}

double CraneSketch::query(EdgeKey e) const {
  const auto q = query_vector(e);
  double y = model_->dec_b.v[0];
  for (std::uint32_t i = 0; i < model_->n_max; ++i)
    y += model_->dec_w.v[i] * q[i];
  return y;
}

Tensor CraneSketch::batch_query_vectors(std::span<const EdgeKey> edges) const {
  const std::uint32_t L = active_layers();
  // distinct node ids per role, first-appearance order
  std::vector<std::uint32_t> oids, dids, orow(edges.size()), drow(edges.size());
  std::unordered_map<std::uint32_t, std::uint32_t> omap, dmap;
  omap.reserve(edges.size());
  dmap.reserve(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto [io, newo] = omap.try_emplace(edges[k].origin,
                                       static_cast<std::uint32_t>(oids.size()));
    if (newo) oids.push_back(edges[k].origin);
    orow[k] = io->second;
    auto [id_, newd] = dmap.try_emplace(edges[k].destination,
                                        static_cast<std::uint32_t>(dids.size()));
    if (newd) dids.push_back(edges[k].destination);
    drow[k] = id_->second;
  }
  Tensor out(edges.size(), model_->n_max);
  std::vector<kernels::MinRatio> scan(edges.size());
  Tensor eo, ed;
  for (std::uint32_t i = 0; i < L; ++i) {
    embed_ids_infer(model_->enc_o[i], oids, eo);
    embed_ids_infer(model_->enc_d[i], dids, ed);
    kernels::batch_min_ratio_basis(memories_[i].data(), kEmbedDim, kEmbedDim,
                                   eo.data(), kEmbedDim, ed.data(), kEmbedDim,
                                   orow.data(), drow.data(), edges.size(),
                                   model_->eps, scan.data(),
                                   kernels::Exec::parallel);
    for (std::size_t k = 0; k < edges.size(); ++k)
      out.at(k, i) = scan[k].value;
  }
  return out;
}

std::vector<double> CraneSketch::batch_query(
    std::span<const EdgeKey> edges) const {
  const Tensor q = batch_query_vectors(edges);
  std::vector<double> y(edges.size(), model_->dec_b.v[0]);
  for (std::size_t k = 0; k < edges.size(); ++k)
    for (std::uint32_t i = 0; i < model_->n_max; ++i)
      y[k] += model_->dec_w.v[i] * q.at(k, i);
  return y;
}

double CraneSketch::node_flux(std::uint32_t node,
                              std::span<const EdgeKey> incident,
                              FluxDirection dir) const {
  std::vector<EdgeKey> mine;
  for (const auto& e : incident) {
    const bool match =
        dir == FluxDirection::out ? e.origin == node : e.destination == node;
    if (match) mine.push_back(e);
  }
  if (mine.empty()) return 0.0;
  const auto est = batch_query(mine);
  double s = 0.0;
  for (double x : est) s += x;
  return s;
}

double CraneSketch::pattern_mass_weighted() const {
  double s = 0.0, scale = 1.0;
  for (std::size_t i = 0; i < pattern_mass_.size(); ++i) {
    s += scale * pattern_mass_[i];
    scale *= model_->theta;
  }
  return s;
}

}  // namespace crane

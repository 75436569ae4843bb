#include "qv/prefill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qv/synthetic.hpp"

namespace qv {

namespace {

uint64_t stream_seed(uint64_t seed, uint32_t tag, uint32_t layer) {
    uint64_t s = seed;
    s = s * 0x100000001b3ull + tag + 1;
    s = s * 0x100000001b3ull + layer + 1;
    return s;
}

// Uniform values in (-scale, scale), reproducible across platforms.
std::vector<float> seeded_matrix(uint64_t seed, uint32_t tag, uint32_t layer,
                                 size_t count, double scale) {
    std::vector<float> m(count);
    uint64_t state = stream_seed(seed, tag, layer);
    for (size_t i = 0; i < count; ++i) {
        const double u = double(splitmix64(state) >> 11) * 0x1.0p-53;
        m[i] = float((u * 2.0 - 1.0) * scale);
    }
    return m;
}

constexpr uint32_t kTagKey = 1;
constexpr uint32_t kTagValue = 2;
constexpr uint32_t kTagQuery = 3;
constexpr uint32_t kTagEmbed = 4;
constexpr uint32_t kTagPrompt = 5;

// out(rows, d) = x(rows, d) * w(d, d), double accumulation.
void matmul(std::span<const float> x, std::span<const float> w, size_t rows,
            size_t d, std::vector<float>& out) {
    out.assign(rows * d, 0.0f);
    std::vector<double> acc(d);
    for (size_t r = 0; r < rows; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* xr = x.data() + r * d;
        for (size_t i = 0; i < d; ++i) {
            const double xi = xr[i];
            const float* wrow = w.data() + i * d;
            for (size_t o = 0; o < d; ++o) acc[o] += xi * wrow[o];
        }
        float* or_ = out.data() + r * d;
        for (size_t o = 0; o < d; ++o) or_[o] = float(acc[o]);
    }
}

} // namespace

void ModelConfig::validate() const {
    if (d_model == 0 || n_h == 0 || d_h == 0 || layers == 0 || tokens_per_frame == 0)
        throw Error("model config: dimensions must be positive");
    if (uint64_t{n_h} * d_h != d_model)
        throw Error("model config: d_model must equal n_h * d_h");
}

void PruneConfig::validate() const {
    if (!(rho > 0.0 && rho <= 1.0)) throw Error("retention ratio must be in (0, 1]");
}

Scorer scorer_from_name(const std::string& name) {
    if (name == "key_norm_small") return Scorer::key_norm_small;
    if (name == "value_norm") return Scorer::value_norm;
    if (name == "attention_score") return Scorer::attention_score;
    throw Error("unknown scorer: " + name);
}

const char* scorer_name(Scorer s) {
    switch (s) {
        case Scorer::key_norm_small: return "key_norm_small";
        case Scorer::value_norm: return "value_norm";
        case Scorer::attention_score: return "attention_score";
    }
    return "?";
}

uint64_t KvCache::value_bytes() const {
    uint64_t total = 0;
    for (const LayerCache& l : layers)
        total += (l.k.size() + l.v.size()) * sizeof(float);
    return total;
}

bool KvCache::same_entries(const KvCache& other) const {
    return n_h == other.n_h && d_h == other.d_h && layers == other.layers;
}

StandInModel::StandInModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    const size_t d = config_.d_model;
    const double proj_scale = 1.0 / std::sqrt(double(d));
    w_k_.reserve(config_.layers);
    w_v_.reserve(config_.layers);
    for (uint32_t l = 0; l < config_.layers; ++l) {
        w_k_.push_back(seeded_matrix(config_.seed, kTagKey, l, d * d, proj_scale));
        w_v_.push_back(seeded_matrix(config_.seed, kTagValue, l, d * d, proj_scale));
    }
    embed_ = seeded_matrix(config_.seed, kTagEmbed, 0, d * 3, 1.0 / 255.0);

    // Fixed synthetic prompt, projected once; pruning can consult the text
    // query while video groups are still arriving.
    std::vector<float> prompt =
        seeded_matrix(config_.seed, kTagPrompt, 0, size_t{config_.text_tokens} * d, 1.0);
    std::vector<float> w_q = seeded_matrix(config_.seed, kTagQuery, 0, d * d, proj_scale);
    matmul(prompt, w_q, config_.text_tokens, d, query_);
}

std::pair<uint32_t, uint32_t> StandInModel::patch_grid(uint32_t tokens_per_frame) {
    uint32_t rows = 1;
    for (uint32_t r = 1; uint64_t{r} * r <= tokens_per_frame; ++r)
        if (tokens_per_frame % r == 0) rows = r;
    return {rows, tokens_per_frame / rows};
}

TokenGroup StandInModel::tokenize_group(const FrameBuffer& frames, size_t frame_begin,
                                        size_t frame_end, size_t group_id) const {
    if (frame_end <= frame_begin || frame_end > frames.slots())
        throw Error("tokenize: bad frame range");
    const auto [grid_rows, grid_cols] = patch_grid(config_.tokens_per_frame);
    const uint32_t h = frames.height();
    const uint32_t w = frames.width();
    if (h % grid_rows != 0 || w % grid_cols != 0)
        throw Error("tokenize: frame size not divisible into the patch grid");
    const uint32_t patch_h = h / grid_rows;
    const uint32_t patch_w = w / grid_cols;
    const size_t plane = size_t{w} * h;
    const size_t d = config_.d_model;

    TokenGroup group;
    group.group_id = group_id;
    group.first_token = uint64_t(frame_begin) * config_.tokens_per_frame;
    group.frame_begin = frame_begin;
    group.frame_end = frame_end;
    group.token_count = (frame_end - frame_begin) * size_t{config_.tokens_per_frame};
    group.tokens.resize(group.token_count * d);

    size_t token = 0;
    for (size_t slot = frame_begin; slot < frame_end; ++slot) {
        std::span<const uint8_t> pixels = frames.slot(slot);
        for (uint32_t gr = 0; gr < grid_rows; ++gr) {
            for (uint32_t gc = 0; gc < grid_cols; ++gc) {
                double mean[3] = {0, 0, 0};
                for (uint32_t c = 0; c < 3; ++c) {
                    double sum = 0;
                    for (uint32_t y = gr * patch_h; y < (gr + 1) * patch_h; ++y)
                        for (uint32_t x = gc * patch_w; x < (gc + 1) * patch_w; ++x)
                            sum += pixels[c * plane + size_t{y} * w + x];
                    mean[c] = sum / (double(patch_h) * patch_w);
                }
                float* out = group.tokens.data() + token * d;
                for (size_t o = 0; o < d; ++o) {
                    const float* e = embed_.data() + o * 3;
                    out[o] = float(e[0] * mean[0] + e[1] * mean[1] + e[2] * mean[2]);
                }
                ++token;
            }
        }
    }
    return group;
}

std::vector<TokenGroup> StandInModel::tokenize(const FrameBuffer& frames,
                                               uint32_t frames_per_group) const {
    if (frames.slots() == 0) throw Error("tokenize: empty frame buffer");
    if (frames_per_group == 0) throw Error("tokenize: frames_per_group must be >= 1");
    std::vector<TokenGroup> groups;
    const uint64_t count = group_count(frames.slots(), frames_per_group);
    groups.reserve(count);
    for (uint64_t g = 0; g < count; ++g) {
        const size_t begin = size_t(g) * frames_per_group;
        const size_t end = std::min<size_t>(begin + frames_per_group, frames.slots());
        groups.push_back(tokenize_group(frames, begin, end, size_t(g)));
    }
    return groups;
}

void StandInModel::project(const TokenGroup& group, uint32_t layer, std::vector<float>& k,
                           std::vector<float>& v) const {
    if (layer >= config_.layers) throw Error("project: layer out of range");
    matmul(group.tokens, w_k_[layer], group.token_count, config_.d_model, k);
    matmul(group.tokens, w_v_[layer], group.token_count, config_.d_model, v);
}

std::vector<double> score_tokens(std::span<const float> k, std::span<const float> v,
                                 size_t token_count, uint32_t n_h, uint32_t d_h,
                                 Scorer scorer, std::span<const float> text_query) {
    const size_t d = size_t{n_h} * d_h;
    if (k.size() != token_count * d || v.size() != token_count * d)
        throw Error("score: tensor shape mismatch");
    std::vector<double> scores(token_count);
    switch (scorer) {
        case Scorer::key_norm_small:
        case Scorer::value_norm: {
            const bool keys = scorer == Scorer::key_norm_small;
            std::span<const float> t = keys ? k : v;
            for (size_t i = 0; i < token_count; ++i) {
                double sq = 0;
                const float* row = t.data() + i * d;
                for (size_t j = 0; j < d; ++j) sq += double(row[j]) * row[j];
                const double norm = std::sqrt(sq);
                scores[i] = keys ? -norm : norm;
            }
            break;
        }
        case Scorer::attention_score: {
            if (text_query.empty())
                throw Error("attention_score scorer requires a text query");
            if (text_query.size() % d != 0)
                throw Error("score: text query shape mismatch");
            const size_t text_count = text_query.size() / d;
            for (size_t i = 0; i < token_count; ++i) {
                const float* key = k.data() + i * d;
                double sum = 0;
                for (size_t t = 0; t < text_count; ++t) {
                    const float* q = text_query.data() + t * d;
                    for (size_t j = 0; j < d; ++j) sum += double(key[j]) * q[j];
                }
                // Mean of raw dot products over text tokens and heads.
                scores[i] = sum / (double(text_count) * n_h);
            }
            break;
        }
    }
    return scores;
}

size_t retained_count(double rho, size_t token_count) {
    const auto rounded = size_t(std::llround(rho * double(token_count)));
    return std::min(token_count, std::max<size_t>(1, rounded));
}

std::vector<uint32_t> top_k_indices(std::span<const double> scores, size_t k) {
    std::vector<uint32_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0u);
    k = std::min(k, idx.size());
    const auto better = [&](uint32_t a, uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b; // equal scores keep the earlier token
    };
    std::nth_element(idx.begin(), idx.begin() + std::ptrdiff_t(k ? k - 1 : 0), idx.end(),
                     better);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

PrunedGroup prune_group(std::span<const float> k, std::span<const float> v,
                        size_t token_count, uint32_t n_h, uint32_t d_h,
                        const PruneConfig& prune, std::span<const float> text_query) {
    prune.validate();
    if (token_count == 0) throw Error("prune: empty group");
    const size_t d = size_t{n_h} * d_h;

    PrunedGroup out;
    if (prune.rho == 1.0) {
        // No-pruning identity: keep everything, bit for bit.
        out.k.assign(k.begin(), k.end());
        out.v.assign(v.begin(), v.end());
        out.indices.resize(token_count);
        std::iota(out.indices.begin(), out.indices.end(), 0u);
        return out;
    }

    const std::vector<double> scores =
        score_tokens(k, v, token_count, n_h, d_h, prune.scorer, text_query);
    out.indices = top_k_indices(scores, retained_count(prune.rho, token_count));
    out.k.reserve(out.indices.size() * d);
    out.v.reserve(out.indices.size() * d);
    for (uint32_t i : out.indices) {
        out.k.insert(out.k.end(), k.begin() + i * d, k.begin() + (i + 1) * d);
        out.v.insert(out.v.end(), v.begin() + i * d, v.begin() + (i + 1) * d);
    }
    return out;
}

KvCache make_cache(const ModelConfig& config) {
    config.validate();
    KvCache cache;
    cache.n_h = config.n_h;
    cache.d_h = config.d_h;
    cache.layers.resize(config.layers);
    return cache;
}

void prefill_group(const StandInModel& model, const TokenGroup& group,
                   const PruneConfig& prune, KvCache& cache) {
    const ModelConfig& cfg = model.config();
    std::vector<float> k, v;
    size_t retained = 0;
    for (uint32_t l = 0; l < cfg.layers; ++l) {
        model.project(group, l, k, v);
        PrunedGroup pruned = prune_group(
            k, v, group.token_count, cfg.n_h, cfg.d_h, prune,
            prune.scorer == Scorer::attention_score ? model.text_query()
                                                    : std::span<const float>{});
        LayerCache& layer = cache.layers[l];
        layer.k.insert(layer.k.end(), pruned.k.begin(), pruned.k.end());
        layer.v.insert(layer.v.end(), pruned.v.begin(), pruned.v.end());
        for (uint32_t i : pruned.indices)
            layer.origin.push_back(group.first_token + i);
        retained = pruned.indices.size();
    }
    cache.retained_per_group.push_back(retained);
    cache.tokens_seen += group.token_count;
    cache.peak_group_tokens = std::max(cache.peak_group_tokens, group.token_count);
}

KvCache prefill(const StandInModel& model, std::span<const TokenGroup> groups,
                const PruneConfig& prune) {
    if (groups.empty()) throw Error("prefill: no token groups");
    prune.validate();
    KvCache cache = make_cache(model.config());
    for (const TokenGroup& g : groups) prefill_group(model, g, prune, cache);
    return cache;
}

uint64_t group_count(uint64_t total_frames, uint32_t frames_per_group) {
    if (frames_per_group == 0) throw Error("frames_per_group must be >= 1");
    return (total_frames + frames_per_group - 1) / frames_per_group;
}

} // namespace qv

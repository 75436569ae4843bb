#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qv/decode.hpp"

namespace qv {

/// Dimensions and seed of the deterministic stand-in encoder + projection
/// stack. It replaces the ViT/LLM attention stack with seeded linear maps
/// so the pruning arithmetic runs on tensors of the real shapes.
struct ModelConfig {
    uint32_t d_model = 64;
    uint32_t n_h = 4;
    uint32_t d_h = 16;
    uint32_t layers = 2;
    uint32_t tokens_per_frame = 4;
    uint32_t text_tokens = 256;
    uint64_t seed = 1;

    void validate() const;
};

/// A contiguous block of video tokens: row-major (token_count, d_model).
struct TokenGroup {
    size_t group_id = 0;
    uint64_t first_token = 0; // global id of row 0
    size_t frame_begin = 0;   // slot range [frame_begin, frame_end) in the buffer
    size_t frame_end = 0;
    size_t token_count = 0;
    std::vector<float> tokens;
};

enum class Scorer { key_norm_small, value_norm, attention_score };

Scorer scorer_from_name(const std::string& name);
const char* scorer_name(Scorer s);

struct PruneConfig {
    Scorer scorer = Scorer::key_norm_small;
    double rho = 1.0; // retention ratio in (0, 1]

    void validate() const;
};

/// Per-layer retained keys/values, (tokens, n_h, d_h) flattened, plus the
/// global token ids each retained row came from.
struct LayerCache {
    std::vector<float> k;
    std::vector<float> v;
    std::vector<uint64_t> origin;

    bool operator==(const LayerCache&) const = default;
};

struct KvCache {
    uint32_t n_h = 0;
    uint32_t d_h = 0;
    std::vector<LayerCache> layers;
    std::vector<size_t> retained_per_group;
    uint64_t tokens_seen = 0;
    size_t peak_group_tokens = 0;

    size_t retained_tokens() const { return layers.empty() ? 0 : layers[0].origin.size(); }
    uint64_t value_bytes() const;
    bool same_entries(const KvCache& other) const;
};

/// Seeded projection weights; build once, share read-only across threads.
class StandInModel {
public:
    explicit StandInModel(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    /// Patch grid (rows, cols) used to cut each frame into tokens.
    static std::pair<uint32_t, uint32_t> patch_grid(uint32_t tokens_per_frame);

    /// Mean-pools each patch and projects it to d_model. Identical frames
    /// produce identical tokens.
    TokenGroup tokenize_group(const FrameBuffer& frames, size_t frame_begin,
                              size_t frame_end, size_t group_id) const;
    std::vector<TokenGroup> tokenize(const FrameBuffer& frames,
                                     uint32_t frames_per_group) const;

    /// K = X W_K, V = X W_V for one layer, reshaped to (tokens, n_h, d_h).
    void project(const TokenGroup& group, uint32_t layer, std::vector<float>& k,
                 std::vector<float>& v) const;

    /// Text-query tensor (text_tokens, n_h, d_h) for attention scoring,
    /// computed upfront from a fixed synthetic prompt.
    std::span<const float> text_query() const { return query_; }

private:
    ModelConfig config_;
    std::vector<std::vector<float>> w_k_; // per layer, (d_model, d_model) row-major
    std::vector<std::vector<float>> w_v_;
    std::vector<float> embed_; // (d_model, 3)
    std::vector<float> query_;
};

/// Importance scores, one per token. key_norm_small negates the key L2 norm
/// (small norms score high), value_norm is the value L2 norm, and
/// attention_score averages raw key-query dot products over text tokens
/// and heads.
std::vector<double> score_tokens(std::span<const float> k, std::span<const float> v,
                                 size_t token_count, uint32_t n_h, uint32_t d_h,
                                 Scorer scorer, std::span<const float> text_query = {});

/// max(1, round(rho * token_count)), capped at token_count.
size_t retained_count(double rho, size_t token_count);

/// Indices of the k highest scores, ties to the smaller index, returned in
/// ascending original order.
std::vector<uint32_t> top_k_indices(std::span<const double> scores, size_t k);

struct PrunedGroup {
    std::vector<float> k;
    std::vector<float> v;
    std::vector<uint32_t> indices;
};

PrunedGroup prune_group(std::span<const float> k, std::span<const float> v,
                        size_t token_count, uint32_t n_h, uint32_t d_h,
                        const PruneConfig& prune, std::span<const float> text_query = {});

KvCache make_cache(const ModelConfig& config);

/// Projects, scores, and prunes one group for every layer, appending the
/// retained entries to the cache. Groups must arrive in order.
void prefill_group(const StandInModel& model, const TokenGroup& group,
                   const PruneConfig& prune, KvCache& cache);

KvCache prefill(const StandInModel& model, std::span<const TokenGroup> groups,
                const PruneConfig& prune);

/// ceil(total_frames / frames_per_group)
uint64_t group_count(uint64_t total_frames, uint32_t frames_per_group);

} // namespace qv

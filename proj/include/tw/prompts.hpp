#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tw {

// A foreground/background prompt pair, optionally tagged with the scene
// conditions the meta-prompt asked for (weather, time of day, lighting,
// site).
struct PromptPair {
    std::string id;
    std::string foreground;
    std::string background;
    std::vector<std::string> tags;

    bool operator==(const PromptPair&) const = default;
};

struct PromptBatch {
    std::string meta_prompt_id;
    std::vector<PromptPair> pairs;

    bool operator==(const PromptBatch&) const = default;
};

// Parses the structured-output document a language model returns. Rejects
// duplicate or empty prompts with an error naming the offending element
// (e.g. "pairs[1].background"); unknown extra fields pass through silently.
PromptBatch parse_prompt_batch(const std::string& document);

// Canonical form: parse(serialize(batch)) == batch and
// serialize(parse(doc)) == doc for canonical documents.
std::string serialize_prompt_batch(const PromptBatch& batch);

// Pool of prompt pairs with per-pair usage counting. Sampling is uniform
// among the currently least-used pairs, so no pair ever runs more than one
// use ahead of another — cheap insurance against the mode collapse you get
// from hammering one prompt. Mutations assume a single writer; concurrent
// reads are fine.
class PromptPool {
  public:
    // Rejects ids that already exist in the pool.
    void add_batch(const PromptBatch& batch);

    size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }

    // Deterministic for a fixed seed and pool state. Increments the winner's
    // usage counter. Throws on an empty pool.
    const PromptPair& sample(uint64_t rng_seed);

    uint64_t usage(const std::string& id) const;
    uint64_t min_usage() const;
    uint64_t max_usage() const;
    const std::vector<PromptPair>& pairs() const { return pairs_; }
    const std::vector<std::string>& batch_ids() const { return batch_ids_; }

    // Directory layout: batches/<meta_prompt_id>.json + usage.json.
    void save(const std::filesystem::path& dir) const;
    static PromptPool load(const std::filesystem::path& dir);

    // Optional externally computed per-pair feature vectors (e.g. text
    // embeddings) for the diversity report.
    void set_embedding(const std::string& id, std::vector<double> embedding);
    const std::map<std::string, std::vector<double>>& embeddings() const { return embeddings_; }

  private:
    std::vector<PromptPair> pairs_;
    std::map<std::string, size_t> index_;  // id -> position in pairs_
    std::vector<uint64_t> usage_;
    std::vector<std::string> batch_ids_;
    std::map<std::string, std::vector<PromptPair>> batches_;
    std::map<std::string, std::vector<double>> embeddings_;
};

struct PoolDiversityReport {
    size_t pairs = 0;
    size_t distinct_foregrounds = 0;
    size_t distinct_backgrounds = 0;
    uint64_t min_usage = 0;
    uint64_t max_usage = 0;
    // Mean pairwise Euclidean distance between the supplied embeddings;
    // absent unless at least two pairs have one.
    std::optional<double> mean_pairwise_distance;
};

PoolDiversityReport diversity_report(const PromptPool& pool);

class PromptClient {
  public:
    virtual ~PromptClient() = default;
    // Output always passes parse_prompt_batch. A batch size outside the
    // conventional 20-30 range logs a warning but is returned anyway.
    virtual PromptBatch request_batch(const std::string& meta_prompt) = 0;
};

// Deterministic batches derived from the meta-prompt hash: the same meta
// prompt always yields the same 20-30 pairs. No network.
class OfflinePromptClient : public PromptClient {
  public:
    PromptBatch request_batch(const std::string& meta_prompt) override;
};

struct PromptClientConfig {
    std::string endpoint;  // chat-completion style HTTP service
    std::string auth_token;
    std::string model = "gpt-4o";
    double timeout_s = 60.0;
};

// Sends the meta prompt to a chat-completion endpoint and parses the
// model's reply as a prompt-batch document. A reply that does not parse is
// an error — it never reaches the pool — and the verbatim reply goes to
// stderr for inspection.
class RemotePromptClient : public PromptClient {
  public:
    explicit RemotePromptClient(PromptClientConfig config);
    PromptBatch request_batch(const std::string& meta_prompt) override;

  private:
    PromptClientConfig config_;
};

// Fixture data: published example pairs and the meta prompt the offline
// tooling uses by default.
const std::vector<PromptPair>& example_prompt_pairs();
const std::string& default_meta_prompt();

}  // namespace tw

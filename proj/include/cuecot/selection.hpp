#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cuecot/types.hpp"

namespace cuecot::selection {

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    bool is_zero() const;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    /// Throws ValidationError for blank text.
    virtual EmbeddingVector embed(std::string_view text) const = 0;
    virtual std::size_t dim() const = 0;
};

/// Hashed bag-of-words term frequencies. Tokens come from text::tokenize
/// (whitespace words, one token per CJK character), ASCII-lowercased, and are
/// bucketed by FNV-1a modulo the dimension.
class HashingEmbedder : public Embedder {
public:
    static constexpr std::size_t kDefaultDim = 4096;

    explicit HashingEmbedder(std::size_t dim = kDefaultDim);
    EmbeddingVector embed(std::string_view text) const override;
    std::size_t dim() const override { return dim_; }

    std::size_t bucket(std::string_view token) const;

private:
    std::size_t dim_;
};

std::shared_ptr<const Embedder> default_embedder();

/// Throws ValidationError on dimension mismatch or a zero vector.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

enum class SelectionKey { ByContext, ByStatus };
std::string_view to_string(SelectionKey key);

/// The text a demonstration is matched on under `key`.
std::string key_text(const Demonstration& demo, SelectionKey key);

/// k distinct items in a seeded order. Throws ValidationError when k > |pool|.
std::vector<Demonstration> select_random(std::span<const Demonstration> pool, std::size_t k,
                                         std::uint64_t seed);

/// Argmax of cosine(embed(query), embed(key_text)) with ties (scores within
/// 1e-12) going to the lexicographically smallest id. Linear scan, no index.
const Demonstration& select_top1(std::span<const Demonstration> pool, std::string_view query_text,
                                 SelectionKey key, const Embedder& embedder);

/// Immutable pool with precomputed key embeddings.
class DemoPool {
public:
    explicit DemoPool(std::vector<Demonstration> items,
                      std::shared_ptr<const Embedder> embedder = default_embedder());

    std::span<const Demonstration> items() const { return items_; }
    bool empty() const { return items_.empty(); }
    bool all_have_status() const;

    /// Same contract as the free select_top1; `exclude_id` skips one item
    /// (typically the query sample itself).
    const Demonstration& select_top1(std::string_view query_text, SelectionKey key,
                                     std::string_view exclude_id = {}) const;

    std::vector<Demonstration> select_random(std::size_t k, std::uint64_t seed,
                                             std::string_view exclude_id = {}) const;

    const Embedder& embedder() const { return *embedder_; }

private:
    std::vector<Demonstration> items_;
    std::shared_ptr<const Embedder> embedder_;
    std::vector<EmbeddingVector> context_vecs_;
    std::vector<std::optional<EmbeddingVector>> status_vecs_;
};

/// Dataset records plus optional `status` / `status_source`; ground_truth is
/// the demonstration response and is required.
std::vector<Demonstration> load_pool(const std::filesystem::path& path);
void save_pool(const std::filesystem::path& path, std::span<const Demonstration> pool);

}  // namespace cuecot::selection

namespace cuecot {
void to_json(json& j, const Demonstration& d);
void from_json(const json& j, Demonstration& d);
}  // namespace cuecot

#include "cuecot/selection.hpp"

#include "cuecot/error.hpp"
#include "cuecot/random.hpp"
#include "cuecot/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace cuecot::selection {

bool EmbeddingVector::is_zero() const {
    return std::all_of(values.begin(), values.end(), [](double x) { return x == 0.0; });
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw ValidationError("embedding dimension must be positive");
}

std::size_t HashingEmbedder::bucket(std::string_view token) const {
    return static_cast<std::size_t>(text::fnv1a(token) % dim_);
}

EmbeddingVector HashingEmbedder::embed(std::string_view s) const {
    auto tokens = text::tokenize(s);
    if (tokens.empty()) throw ValidationError("cannot embed empty text");
    EmbeddingVector v;
    v.values.assign(dim_, 0.0);
    for (auto& tok : tokens) {
        std::transform(tok.begin(), tok.end(), tok.begin(), [](char c) {
            return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
        });
        v.values[bucket(tok)] += 1.0;
    }
    return v;
}

std::shared_ptr<const Embedder> default_embedder() {
    static const auto embedder = std::make_shared<const HashingEmbedder>();
    return embedder;
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dim() != v.dim()) throw ValidationError("embedding dimensions differ");
    double dot = 0.0;
    double nu = 0.0;
    double nv = 0.0;
    for (std::size_t i = 0; i < u.dim(); ++i) {
        dot += u.values[i] * v.values[i];
        nu += u.values[i] * u.values[i];
        nv += v.values[i] * v.values[i];
    }
    if (nu == 0.0 || nv == 0.0) throw ValidationError("cosine of a zero vector");
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

std::string_view to_string(SelectionKey key) {
    return key == SelectionKey::ByContext ? "by_context" : "by_status";
}

std::string key_text(const Demonstration& demo, SelectionKey key) {
    if (key == SelectionKey::ByContext) return demo.context.context_text();
    if (!demo.status || text::is_blank(*demo.status)) {
        throw ValidationError("demonstration '" + demo.id + "' has no status to select on");
    }
    return *demo.status;
}

std::vector<Demonstration> select_random(std::span<const Demonstration> pool, std::size_t k,
                                         std::uint64_t seed) {
    if (k > pool.size()) {
        throw ValidationError("cannot select " + std::to_string(k) + " demonstrations from a pool of " +
                              std::to_string(pool.size()));
    }
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    // Partial Fisher-Yates: the first k slots end up uniformly drawn.
    for (std::size_t i = 0; i < k; ++i) {
        auto j = i + rng.below(pool.size() - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<Demonstration> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(pool[idx[i]]);
    return out;
}

namespace {

// Scores this close are ties; equal cosines of different count vectors can
// differ in the last bits.
constexpr double kTieTolerance = 1e-12;

// Clearly better score, or a tie with a smaller id.
bool better(double score, const std::string& id, double best_score, const std::string& best_id) {
    if (score > best_score + kTieTolerance) return true;
    return std::abs(score - best_score) <= kTieTolerance && id < best_id;
}

}  // namespace

const Demonstration& select_top1(std::span<const Demonstration> pool, std::string_view query_text,
                                 SelectionKey key, const Embedder& embedder) {
    if (pool.empty()) throw ValidationError("demonstration pool is empty");
    const auto query = embedder.embed(query_text);
    const Demonstration* best = nullptr;
    double best_score = 0.0;
    for (const auto& demo : pool) {
        double score = cosine(query, embedder.embed(key_text(demo, key)));
        if (!best || better(score, demo.id, best_score, best->id)) {
            best = &demo;
            best_score = score;
        }
    }
    return *best;
}

DemoPool::DemoPool(std::vector<Demonstration> items, std::shared_ptr<const Embedder> embedder)
    : items_(std::move(items)), embedder_(std::move(embedder)) {
    if (!embedder_) embedder_ = default_embedder();
    std::unordered_set<std::string> ids;
    context_vecs_.reserve(items_.size());
    status_vecs_.reserve(items_.size());
    for (const auto& d : items_) {
        if (!ids.insert(d.id).second) throw ValidationError("duplicate demonstration id '" + d.id + "'");
        if (text::is_blank(d.response)) {
            throw ValidationError("demonstration '" + d.id + "' has an empty response");
        }
        context_vecs_.push_back(embedder_->embed(d.context.context_text()));
        if (d.status && !text::is_blank(*d.status)) {
            status_vecs_.emplace_back(embedder_->embed(*d.status));
        } else {
            status_vecs_.emplace_back(std::nullopt);
        }
    }
}

bool DemoPool::all_have_status() const {
    return std::all_of(status_vecs_.begin(), status_vecs_.end(),
                       [](const auto& v) { return v.has_value(); });
}

const Demonstration& DemoPool::select_top1(std::string_view query_text, SelectionKey key,
                                           std::string_view exclude_id) const {
    const auto query = embedder_->embed(query_text);
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const auto& demo = items_[i];
        if (!exclude_id.empty() && demo.id == exclude_id) continue;
        const EmbeddingVector* vec = &context_vecs_[i];
        if (key == SelectionKey::ByStatus) {
            if (!status_vecs_[i]) {
                throw ValidationError("demonstration '" + demo.id + "' has no status to select on");
            }
            vec = &*status_vecs_[i];
        }
        double score = cosine(query, *vec);
        if (!best || better(score, demo.id, best_score, items_[*best].id)) {
            best = i;
            best_score = score;
        }
    }
    if (!best) throw ValidationError("demonstration pool is empty");
    return items_[*best];
}

std::vector<Demonstration> DemoPool::select_random(std::size_t k, std::uint64_t seed,
                                                   std::string_view exclude_id) const {
    if (exclude_id.empty()) return selection::select_random(items_, k, seed);
    std::vector<Demonstration> filtered;
    filtered.reserve(items_.size());
    for (const auto& d : items_) {
        if (d.id != exclude_id) filtered.push_back(d);
    }
    return selection::select_random(filtered, k, seed);
}

std::vector<Demonstration> load_pool(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open pool " + path.string());
    std::vector<Demonstration> out;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        try {
            auto d = json::parse(line).get<Demonstration>();
            d.context.validate();
            if (!ids.insert(d.id).second) throw ValidationError("duplicate pool id '" + d.id + "'");
            out.push_back(std::move(d));
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed pool record: ") + e.what(), line_no);
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

void save_pool(const std::filesystem::path& path, std::span<const Demonstration> pool) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& d : pool) out << json(d).dump() << '\n';
}

}  // namespace cuecot::selection

namespace cuecot {

void to_json(json& j, const Demonstration& d) {
    Dialogue record = d.context;
    record.id = d.id;
    record.ground_truth = d.response;
    j = record;
    if (d.status) j["status"] = *d.status;
    if (!d.status_source.empty()) j["status_source"] = d.status_source;
}

void from_json(const json& j, Demonstration& d) {
    Dialogue record = j.get<Dialogue>();
    d.id = record.id;
    if (!record.ground_truth) throw ValidationError("pool record '" + d.id + "' has no ground_truth");
    d.response = *record.ground_truth;
    record.ground_truth.reset();
    d.context = std::move(record);
    if (auto it = j.find("status"); it != j.end() && !it->is_null()) {
        d.status = it->get<std::string>();
    } else {
        d.status.reset();
    }
    d.status_source = j.value("status_source", std::string{});
}

}  // namespace cuecot

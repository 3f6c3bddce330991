#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace pfagent::knowledge {

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed(std::string_view text) const = 0;
    virtual std::size_t dimension() const = 0;
};

/// Term-frequency vector over hashed lowercase tokens, L2-normalised, so
/// that a dot product is the cosine similarity. Needs no model files.
class HashedBagOfWords final : public Embedder {
public:
    explicit HashedBagOfWords(std::size_t dimension = 2048) : dim_(dimension) {}
    std::vector<float> embed(std::string_view text) const override;
    std::size_t dimension() const override { return dim_; }

private:
    std::size_t dim_;
};

std::vector<std::string> tokenize(std::string_view text);

struct PassageWindow {
    std::string window_id;
    int start_page = 1;  // 1-based, inclusive
    int end_page = 1;
    std::string text;
    std::vector<float> embedding;
};

struct ScoredWindow {
    PassageWindow window;
    double score = 0.0;
};

class SimilarityIndex {
public:
    /// Throws Error("EmptyManual") for no pages, Error("InvalidArgument") for bad window sizes.
    static SimilarityIndex build(const std::vector<std::string>& pages, int window_pages, int overlap_pages,
                                 std::shared_ptr<const Embedder> embedder);

    /// Top-k windows by cosine similarity; ties go to the smaller window_id.
    std::vector<ScoredWindow> retrieve(std::string_view query, std::size_t k) const;

    const std::vector<PassageWindow>& windows() const { return windows_; }

private:
    std::vector<PassageWindow> windows_;
    std::shared_ptr<const Embedder> embedder_;
};

/// Page ranges [start, end] of the sliding windows over `n_pages` pages.
std::vector<std::pair<int, int>> window_ranges(int n_pages, int window_pages, int overlap_pages);

/// Pages of a plain-text manual, separated by form feeds.
std::vector<std::string> load_manual_pages(const std::filesystem::path& path);

}  // namespace pfagent::knowledge

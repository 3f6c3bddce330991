#include "pfagent/knowledge/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>

#include "pfagent/util/error.hpp"
#include "pfagent/util/files.hpp"
#include "pfagent/util/text.hpp"

namespace pfagent::knowledge {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string window_id_for(std::size_t i) {
    std::string n = std::to_string(i);
    return "w" + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.size() >= 2) out.push_back(cur);
        cur.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '_') cur += static_cast<char>(std::tolower(c));
        else flush();
    }
    flush();
    return out;
}

std::vector<float> HashedBagOfWords::embed(std::string_view text) const {
    std::map<std::string, int> tf;
    for (auto& t : tokenize(text)) ++tf[t];
    std::vector<double> acc(dim_, 0.0);
    for (const auto& [tok, n] : tf) acc[fnv1a(tok) % dim_] += 1.0 + std::log(static_cast<double>(n));
    double norm = 0.0;
    for (double x : acc) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<float> out(dim_, 0.0f);
    if (norm > 0.0)
        for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(acc[i] / norm);
    return out;
}

std::vector<std::pair<int, int>> window_ranges(int n_pages, int window_pages, int overlap_pages) {
    if (window_pages < 1 || overlap_pages < 0 || overlap_pages >= window_pages)
        throw Error("InvalidArgument", "need window_pages >= 1 and 0 <= overlap_pages < window_pages");
    std::vector<std::pair<int, int>> out;
    if (n_pages <= 0) return out;
    const int step = window_pages - overlap_pages;
    for (int start = 1;; start += step) {
        const int end = std::min(start + window_pages - 1, n_pages);
        out.emplace_back(start, end);
        if (end == n_pages) break;
    }
    return out;
}

SimilarityIndex SimilarityIndex::build(const std::vector<std::string>& pages, int window_pages, int overlap_pages,
                                       std::shared_ptr<const Embedder> embedder) {
    if (pages.empty()) throw Error("EmptyManual", "manual has no pages");
    if (!embedder) throw Error("InvalidArgument", "no embedder");
    SimilarityIndex idx;
    idx.embedder_ = std::move(embedder);
    const auto ranges = window_ranges(static_cast<int>(pages.size()), window_pages, overlap_pages);
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        PassageWindow w;
        w.window_id = window_id_for(i);
        w.start_page = ranges[i].first;
        w.end_page = ranges[i].second;
        for (int p = w.start_page; p <= w.end_page; ++p) w.text += pages[static_cast<std::size_t>(p - 1)];
        w.embedding = idx.embedder_->embed(w.text);
        idx.windows_.push_back(std::move(w));
    }
    return idx;
}

std::vector<ScoredWindow> SimilarityIndex::retrieve(std::string_view query, std::size_t k) const {
    const auto q = embedder_->embed(query);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < windows_.size(); ++i) {
        double s = 0.0;
        const auto& e = windows_[i].embedding;
        for (std::size_t d = 0; d < q.size() && d < e.size(); ++d) s += static_cast<double>(q[d]) * e[d];
        scored.emplace_back(s, i);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return windows_[a.second].window_id < windows_[b.second].window_id;
    });
    std::vector<ScoredWindow> out;
    for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back({windows_[scored[i].second], scored[i].first});
    return out;
}

std::vector<std::string> load_manual_pages(const std::filesystem::path& path) {
    std::vector<std::string> pages;
    for (auto& p : util::split(util::read_file(path), '\f'))
        if (!util::trim(p).empty()) pages.push_back(std::move(p));
    return pages;
}

}  // namespace pfagent::knowledge

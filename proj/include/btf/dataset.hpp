#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "btf/errors.hpp"

namespace btf {

// Sentiment polarity of a triplet. Invalid is the rejection class used by
// the region classifier; parsed triplets never carry it.
enum class Polarity : uint8_t { Positive, Negative, Neutral, Invalid };

inline const char* polarity_name(Polarity p) {
    switch (p) {
        case Polarity::Positive: return "Positive";
        case Polarity::Negative: return "Negative";
        case Polarity::Neutral: return "Neutral";
        default: return "Invalid";
    }
}

inline const char* polarity_tag(Polarity p) {
    switch (p) {
        case Polarity::Positive: return "POS";
        case Polarity::Negative: return "NEG";
        case Polarity::Neutral: return "NEU";
        default: return "INV";
    }
}

// Inclusive token index range.
struct Span {
    int start = 0;
    int end = 0;
    auto operator<=>(const Span&) const = default;
};

struct Triplet {
    Span aspect;
    Span opinion;
    Polarity sentiment = Polarity::Positive;
    auto operator<=>(const Triplet&) const = default;
};

struct Sentence {
    std::vector<std::string> tokens;
    std::vector<int> ids;  // same length as tokens once a vocabulary is applied
};

struct Example {
    Sentence sentence;
    std::vector<Triplet> triplets;
};

struct CorpusStats {
    int sentence_count = 0;
    int pos_count = 0;
    int neu_count = 0;
    int neg_count = 0;
    bool operator==(const CorpusStats&) const = default;
};

// Lowercased surface-form vocabulary with reserved ids 0=PAD, 1=UNK, 2=CLS.
class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;

    Vocab();
    // content words in id order (ids 3..), e.g. from a checkpoint snapshot
    explicit Vocab(const std::vector<std::string>& content_words);

    int encode(const std::string& token) const;  // lowercases; UNK when absent
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(id_to_token_.size()); }
    // content words only, in id order (for serialization)
    std::vector<std::string> content_words() const;

  private:
    void index(const std::string& word);
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Frequency-descending, then lexicographic; tokens below min_freq are left
// out and encode to UNK.
Vocab build_vocab(const std::vector<Sentence>& corpus, int min_freq = 1);

// Parses one `<tokens>####[([a..], [o..], 'POS'), ...]` line. The returned
// sentence has no ids yet. line_number is only used in error messages.
Example parse_line(const std::string& line, int line_number = 0);

// Parses a whole file without a vocabulary (ids left empty).
std::pair<std::vector<Example>, CorpusStats> parse_file(const std::string& path,
                                                        int max_len = 100);

void assign_ids(std::vector<Example>& examples, const Vocab& vocab);

// parse_file + assign_ids.
std::pair<std::vector<Example>, CorpusStats> load_split(const std::string& path,
                                                        const Vocab& vocab, int max_len = 100);

// Inverse of parse_line over well-formed examples.
std::string serialize_example(const std::vector<std::string>& tokens,
                              const std::vector<Triplet>& triplets);

std::string format_stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows);

}  // namespace btf

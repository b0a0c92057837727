#include "btf/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace btf {

namespace {

std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

[[noreturn]] void fail(int line_number, const std::string& what) {
    throw DataError("line " + std::to_string(line_number) + ": " + what);
}

// Hand-rolled scanner for the triplet list; keeps a cursor so errors can say
// what was expected where.
struct TripletScanner {
    const std::string& s;
    size_t pos = 0;
    int line_number;

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    void expect(char c, const char* ctx) {
        if (!eat(c))
            fail(line_number, std::string("expected '") + c + "' " + ctx + " at column " +
                                  std::to_string(pos + 1));
    }

    int parse_int() {
        skip_ws();
        size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos == start) fail(line_number, "expected index at column " + std::to_string(pos + 1));
        return std::stoi(s.substr(start, pos - start));
    }

    // `[i, i+1, ...]` must be non-empty, ascending and contiguous
    Span parse_index_list(int n_tokens, const char* role) {
        expect('[', "to open an index list");
        std::vector<int> ids;
        if (!eat(']')) {
            do {
                ids.push_back(parse_int());
            } while (eat(','));
            expect(']', "to close an index list");
        }
        if (ids.empty()) fail(line_number, std::string(role) + " index list is empty");
        for (size_t i = 1; i < ids.size(); ++i)
            if (ids[i] != ids[i - 1] + 1)
                fail(line_number, std::string(role) + " index list is not contiguous ascending");
        if (ids.front() < 0 || ids.back() >= n_tokens)
            fail(line_number, std::string(role) + " index " + std::to_string(ids.back()) +
                                  " out of range for " + std::to_string(n_tokens) + " tokens");
        return Span{ids.front(), ids.back()};
    }

    Polarity parse_polarity() {
        expect('\'', "to open a polarity tag");
        size_t start = pos;
        while (pos < s.size() && s[pos] != '\'') ++pos;
        if (pos >= s.size()) fail(line_number, "unterminated polarity tag");
        const std::string tag = s.substr(start, pos - start);
        ++pos;
        if (tag == "POS") return Polarity::Positive;
        if (tag == "NEU") return Polarity::Neutral;
        if (tag == "NEG") return Polarity::Negative;
        fail(line_number, "unknown polarity '" + tag + "'");
    }

    std::vector<Triplet> parse(int n_tokens) {
        std::vector<Triplet> out;
        expect('[', "to open the triplet list");
        if (!eat(']')) {
            do {
                expect('(', "to open a triplet");
                Triplet t;
                t.aspect = parse_index_list(n_tokens, "aspect");
                expect(',', "between aspect and opinion");
                t.opinion = parse_index_list(n_tokens, "opinion");
                expect(',', "between opinion and polarity");
                t.sentiment = parse_polarity();
                expect(')', "to close a triplet");
                out.push_back(t);
            } while (eat(','));
            expect(']', "to close the triplet list");
        }
        skip_ws();
        if (pos != s.size()) fail(line_number, "trailing characters after the triplet list");
        return out;
    }
};

}  // namespace

Vocab::Vocab() {
    index("<pad>");
    index("<unk>");
    index("<cls>");
}

Vocab::Vocab(const std::vector<std::string>& content_words) : Vocab() {
    for (const auto& w : content_words) index(w);
}

void Vocab::index(const std::string& word) {
    token_to_id_.emplace(word, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(word);
}

int Vocab::encode(const std::string& token) const {
    auto it = token_to_id_.find(lowercase(token));
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size())
        throw DomainError("Vocab: id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<size_t>(id)];
}

std::vector<std::string> Vocab::content_words() const {
    return {id_to_token_.begin() + 3, id_to_token_.end()};
}

Vocab build_vocab(const std::vector<Sentence>& corpus, int min_freq) {
    std::map<std::string, int> freq;
    for (const auto& s : corpus)
        for (const auto& tok : s.tokens) ++freq[lowercase(tok)];

    std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    std::vector<std::string> kept;
    for (const auto& [word, count] : ranked)
        if (count >= min_freq) kept.push_back(word);
    return Vocab(kept);
}

Example parse_line(const std::string& line, int line_number) {
    const size_t sep = line.find("####");
    if (sep == std::string::npos) fail(line_number, "missing '####' separator");

    Example ex;
    std::istringstream toks(line.substr(0, sep));
    std::string tok;
    while (toks >> tok) ex.sentence.tokens.push_back(tok);
    if (ex.sentence.tokens.empty()) fail(line_number, "no tokens before '####'");

    std::string rest = line.substr(sep + 4);
    TripletScanner scanner{rest, 0, line_number};
    ex.triplets = scanner.parse(static_cast<int>(ex.sentence.tokens.size()));
    return ex;
}

std::pair<std::vector<Example>, CorpusStats> parse_file(const std::string& path, int max_len) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);

    std::vector<Example> examples;
    CorpusStats stats;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        try {
            Example ex = parse_line(line, line_number);
            if (static_cast<int>(ex.sentence.tokens.size()) > max_len)
                fail(line_number, "sentence has " + std::to_string(ex.sentence.tokens.size()) +
                                      " tokens, max_len is " + std::to_string(max_len));
            ++stats.sentence_count;
            for (const auto& t : ex.triplets) {
                switch (t.sentiment) {
                    case Polarity::Positive: ++stats.pos_count; break;
                    case Polarity::Neutral: ++stats.neu_count; break;
                    case Polarity::Negative: ++stats.neg_count; break;
                    default: break;
                }
            }
            examples.push_back(std::move(ex));
        } catch (const DataError& e) {
            throw DataError(path + ": " + e.what());
        }
    }
    return {std::move(examples), stats};
}

void assign_ids(std::vector<Example>& examples, const Vocab& vocab) {
    for (auto& ex : examples) {
        ex.sentence.ids.clear();
        ex.sentence.ids.reserve(ex.sentence.tokens.size());
        for (const auto& tok : ex.sentence.tokens) ex.sentence.ids.push_back(vocab.encode(tok));
    }
}

std::pair<std::vector<Example>, CorpusStats> load_split(const std::string& path,
                                                        const Vocab& vocab, int max_len) {
    auto [examples, stats] = parse_file(path, max_len);
    assign_ids(examples, vocab);
    return {std::move(examples), stats};
}

std::string serialize_example(const std::vector<std::string>& tokens,
                              const std::vector<Triplet>& triplets) {
    std::ostringstream os;
    for (size_t i = 0; i < tokens.size(); ++i) os << (i ? " " : "") << tokens[i];
    os << "####[";
    for (size_t k = 0; k < triplets.size(); ++k) {
        const auto& t = triplets[k];
        if (k) os << ", ";
        os << "([";
        for (int i = t.aspect.start; i <= t.aspect.end; ++i)
            os << (i == t.aspect.start ? "" : ", ") << i;
        os << "], [";
        for (int i = t.opinion.start; i <= t.opinion.end; ++i)
            os << (i == t.opinion.start ? "" : ", ") << i;
        os << "], '" << polarity_tag(t.sentiment) << "')";
    }
    os << "]";
    return os.str();
}

std::string format_stats_table(const std::vector<std::pair<std::string, CorpusStats>>& rows) {
    size_t label_w = 5;
    for (const auto& [label, _] : rows) label_w = std::max(label_w, label.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(label_w) + 2) << "split" << std::right
       << std::setw(10) << "sentences" << std::setw(8) << "pos" << std::setw(8) << "neu"
       << std::setw(8) << "neg" << '\n';
    for (const auto& [label, s] : rows) {
        os << std::left << std::setw(static_cast<int>(label_w) + 2) << label << std::right
           << std::setw(10) << s.sentence_count << std::setw(8) << s.pos_count << std::setw(8)
           << s.neu_count << std::setw(8) << s.neg_count << '\n';
    }
    return os.str();
}

}  // namespace btf

#include "march/datamodel.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <unordered_set>

#include <json.hpp>

namespace march {

namespace {

// Decodes one UTF-8 code point starting at i; on malformed input consumes a
// single byte. Returns the code point and advances i past it.
uint32_t next_codepoint(const std::string& s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 1;
    uint32_t cp = b0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    }
    if (i + len > s.size()) {
        ++i;
        return b0;
    }
    for (int k = 1; k < len; ++k) {
        const auto bk = static_cast<unsigned char>(s[i + k]);
        if ((bk & 0xC0) != 0x80) {
            ++i;
            return b0;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += len;
    return cp;
}

bool is_unicode_space(uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

}  // namespace

std::size_t word_count(const std::string& text) {
    std::size_t count = 0;
    bool in_word = false;
    std::size_t i = 0;
    while (i < text.size()) {
        const uint32_t cp = next_codepoint(text, i);
        if (is_unicode_space(cp)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

Document make_document(std::optional<std::string> title, std::string body) {
    Document doc;
    doc.title = std::move(title);
    doc.body = std::move(body);
    doc.word_count = word_count(doc.body);
    return doc;
}

void validate_sample(const RagSample& sample) {
    if (sample.id.empty()) throw DataError("sample id empty");
    if (sample.documents.empty()) throw DataError("documents empty for sample '" + sample.id + "'");
    if (sample.relevance_labels &&
        sample.relevance_labels->size() != sample.documents.size()) {
        throw DataError("relevance labels count mismatch for sample '" + sample.id + "'");
    }
}

namespace {

using nlohmann::json;

RagSample sample_from_json(const json& rec) {
    if (!rec.is_object()) throw DataError("record is not an object");
    RagSample s;
    if (!rec.contains("id") || !rec["id"].is_string()) throw DataError("field 'id' missing or not a string");
    s.id = rec["id"].get<std::string>();
    if (!rec.contains("query") || !rec["query"].is_string()) throw DataError("field 'query' missing or not a string");
    s.query = rec["query"].get<std::string>();
    if (!rec.contains("documents") || !rec["documents"].is_array()) throw DataError("field 'documents' missing or not an array");
    for (const auto& d : rec["documents"]) {
        if (!d.is_object() || !d.contains("body") || !d["body"].is_string()) {
            throw DataError("field 'documents': each entry needs a string 'body'");
        }
        std::optional<std::string> title;
        if (d.contains("title")) {
            if (!d["title"].is_string()) throw DataError("field 'title' not a string");
            title = d["title"].get<std::string>();
        }
        s.documents.push_back(make_document(std::move(title), d["body"].get<std::string>()));
    }
    if (rec.contains("gold_answer")) {
        if (!rec["gold_answer"].is_string()) throw DataError("field 'gold_answer' not a string");
        s.gold_answer = rec["gold_answer"].get<std::string>();
    }
    if (rec.contains("relevance")) {
        if (!rec["relevance"].is_array()) throw DataError("field 'relevance' not an array");
        std::vector<bool> labels;
        for (const auto& v : rec["relevance"]) {
            if (!v.is_boolean()) throw DataError("field 'relevance': entries must be booleans");
            labels.push_back(v.get<bool>());
        }
        s.relevance_labels = std::move(labels);
    }
    return s;
}

json sample_to_json(const RagSample& s) {
    json rec;
    rec["id"] = s.id;
    rec["query"] = s.query;
    rec["documents"] = json::array();
    for (const auto& d : s.documents) {
        json jd;
        if (d.title) jd["title"] = *d.title;
        jd["body"] = d.body;
        rec["documents"].push_back(std::move(jd));
    }
    if (s.gold_answer) rec["gold_answer"] = *s.gold_answer;
    if (s.relevance_labels) {
        rec["relevance"] = json::array();
        for (bool b : *s.relevance_labels) rec["relevance"].push_back(b);
    }
    return rec;
}

}  // namespace

std::vector<RagSample> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    std::vector<RagSample> samples;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        RagSample s;
        try {
            s = sample_from_json(json::parse(line));
            validate_sample(s);
        } catch (const json::exception& e) {
            throw DataError("malformed record at line " + std::to_string(line_no) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()) + " at line " + std::to_string(line_no));
        }
        if (!seen_ids.insert(s.id).second) {
            throw DataError("duplicate id '" + s.id + "' at line " + std::to_string(line_no));
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void save_dataset(const std::vector<RagSample>& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open output file: " + path);
    for (const auto& s : samples) {
        out << sample_to_json(s).dump() << '\n';
    }
}

DatasetStats dataset_stats(const std::vector<RagSample>& samples) {
    if (samples.empty()) throw DataError("dataset_stats: empty input");
    DatasetStats st;
    st.n_samples = samples.size();

    double query_words = 0.0;
    double docs_sum = 0.0, docs_max = 0.0, docs_min = std::numeric_limits<double>::max();
    double len_sum = 0.0, len_max = 0.0, len_min = std::numeric_limits<double>::max();
    std::size_t irrelevant = 0, total_docs = 0;
    bool all_labeled = true;

    for (const auto& s : samples) {
        query_words += static_cast<double>(word_count(s.query));
        const auto n_docs = static_cast<double>(s.documents.size());
        docs_sum += n_docs;
        docs_max = std::max(docs_max, n_docs);
        docs_min = std::min(docs_min, n_docs);
        double sample_words = 0.0;
        for (const auto& d : s.documents) sample_words += static_cast<double>(d.word_count);
        len_sum += sample_words;
        len_max = std::max(len_max, sample_words);
        len_min = std::min(len_min, sample_words);
        total_docs += s.documents.size();
        if (s.relevance_labels) {
            for (bool rel : *s.relevance_labels) {
                if (!rel) ++irrelevant;
            }
        } else {
            all_labeled = false;
        }
    }

    const auto n = static_cast<double>(samples.size());
    st.avg_query_len = query_words / n;
    st.docs_per_query = {docs_sum / n, docs_max, docs_min};
    st.total_doc_len = {len_sum / n, len_max, len_min};
    if (all_labeled && total_docs > 0) {
        st.irrelevant_doc_ratio = static_cast<double>(irrelevant) / static_cast<double>(total_docs);
    }
    return st;
}

}  // namespace march

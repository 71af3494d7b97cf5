#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace march {

/// One retrieved passage. word_count is derived from body at construction.
struct Document {
    std::optional<std::string> title;
    std::string body;
    std::size_t word_count = 0;
};

/// One training/eval unit: a query plus its pre-retrieved documents.
struct RagSample {
    std::string id;
    std::string query;
    std::vector<Document> documents;
    std::optional<std::string> gold_answer;
    std::optional<std::vector<bool>> relevance_labels;
};

struct StatTriple {
    double avg = 0.0;
    double max = 0.0;
    double min = 0.0;
};

struct DatasetStats {
    std::size_t n_samples = 0;
    double avg_query_len = 0.0;
    StatTriple docs_per_query;
    StatTriple total_doc_len;  // words per sample, summed over its documents
    std::optional<double> irrelevant_doc_ratio;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Number of maximal non-whitespace runs (Unicode whitespace treated as
/// ASCII whitespace plus UTF-8 encoded spaces; bytes >= 0x80 inside words
/// never split).
std::size_t word_count(const std::string& text);

Document make_document(std::optional<std::string> title, std::string body);

/// Validates invariants: non-empty id, non-empty documents, label alignment.
void validate_sample(const RagSample& sample);

/// Reads one JSON record per line. Aborts with line number on any malformed
/// record or duplicate id.
std::vector<RagSample> load_dataset(const std::string& path);

/// Inverse of load_dataset; one JSON record per line, LF endings.
void save_dataset(const std::vector<RagSample>& samples, const std::string& path);

/// Corpus statistics. irrelevant_doc_ratio is present iff every sample
/// carries relevance labels.
DatasetStats dataset_stats(const std::vector<RagSample>& samples);

}  // namespace march

#include "march/toyworld.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace march {
namespace toy {

namespace {

const std::vector<std::string>& token_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n(Vocab::kSize);
        for (int d = 0; d < 10; ++d) n[d] = std::string(1, static_cast<char>('0' + d));
        n[Vocab::kSolve] = "<SOLVE>";
        n[Vocab::kPropose] = "<PROPOSE>";
        n[Vocab::kCheck] = "<CHECK>";
        n[Vocab::kDoc] = "<DOC>";
        n[Vocab::kQ] = "<Q>";
        n[Vocab::kA] = "<A>";
        n[Vocab::kSep] = "<SEP>";
        n[Vocab::kEos] = "<EOS>";
        for (int s = 0; s < Vocab::kNumSlots; ++s) {
            n[Vocab::kSlotBase + s] = "s" + std::to_string(s);
        }
        n[Vocab::kNul] = "<NUL>";
        return n;
    }();
    return names;
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

uint64_t mix_seed(uint64_t a, uint64_t b) {
    return splitmix64(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ull));
}

int Vocab::role_token(Role role) {
    switch (role) {
        case Role::Solver: return kSolve;
        case Role::Proposer: return kPropose;
        case Role::Checker: return kCheck;
    }
    return kSolve;
}

const std::string& Vocab::name(int id) {
    return token_names().at(static_cast<std::size_t>(id));
}

std::optional<int> Vocab::id_of(const std::string& name) {
    const auto& names = token_names();
    for (int i = 0; i < kSize; ++i) {
        if (names[static_cast<std::size_t>(i)] == name) return i;
    }
    return std::nullopt;
}

std::string render_tokens(const std::vector<int>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += ' ';
        out += Vocab::name(tokens[i]);
    }
    return out;
}

std::vector<int> parse_tokens(const std::string& text) {
    std::vector<int> tokens;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        const auto id = Vocab::id_of(word);
        if (!id) throw std::invalid_argument("unknown toy token: " + word);
        tokens.push_back(*id);
    }
    return tokens;
}

std::vector<int> digits_of(int value) {
    if (value < 0) throw std::invalid_argument("digits_of: negative value");
    std::vector<int> out;
    const std::string s = std::to_string(value);
    out.reserve(s.size());
    for (char c : s) out.push_back(c - '0');
    return out;
}

ToyTask sample_task(uint64_t seed, const Difficulty& difficulty) {
    if (difficulty.n_facts < 1) throw std::invalid_argument("n_facts must be >= 1");
    if (difficulty.n_facts > Vocab::kNumSlots) throw std::invalid_argument("too many facts");
    std::mt19937_64 rng(splitmix64(seed));

    std::vector<int> slots(Vocab::kNumSlots);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);

    ToyTask task;
    std::uniform_int_distribution<int> value_dist(0, difficulty.max_value);
    for (int i = 0; i < difficulty.n_facts; ++i) task.facts[slots[i]] = value_dist(rng);
    task.query_slot = slots[std::uniform_int_distribution<int>(0, difficulty.n_facts - 1)(rng)];

    std::uniform_int_distribution<int> any_slot(0, Vocab::kNumSlots - 1);
    for (int i = 0; i < difficulty.n_distractors; ++i) {
        const int slot = any_slot(rng);
        int value = value_dist(rng);
        auto fact = task.facts.find(slot);
        if (fact != task.facts.end() && value == fact->second) {
            value = (value + 1) % (difficulty.max_value + 1);
        }
        task.distractors.emplace_back(slot, value);
    }

    // Serialize facts and distractors as <DOC> blocks in shuffled order.
    std::vector<std::vector<int>> blocks;
    for (const auto& [slot, value] : task.facts) {
        std::vector<int> block{Vocab::kDoc, Vocab::slot_token(slot)};
        for (int d : digits_of(value)) block.push_back(d);
        blocks.push_back(std::move(block));
    }
    for (const auto& [slot, value] : task.distractors) {
        std::vector<int> block{Vocab::kDoc, Vocab::slot_token(slot)};
        for (int d : digits_of(value)) block.push_back(d);
        blocks.push_back(std::move(block));
    }
    std::shuffle(blocks.begin(), blocks.end(), rng);
    for (const auto& block : blocks) {
        task.serialized_docs.insert(task.serialized_docs.end(), block.begin(), block.end());
    }
    return task;
}

std::optional<int> exact_oracle(const ToyTask& task, int slot_index) {
    auto it = task.facts.find(slot_index);
    if (it == task.facts.end()) return std::nullopt;
    return it->second;
}

RagSample toy_task_to_sample(const ToyTask& task, const std::string& id) {
    RagSample sample;
    sample.id = id;
    sample.query = Vocab::name(Vocab::slot_token(task.query_slot));
    // One Document per <DOC> block.
    std::vector<int> block;
    for (int tok : task.serialized_docs) {
        if (tok == Vocab::kDoc && !block.empty()) {
            sample.documents.push_back(make_document(std::nullopt, render_tokens(block)));
            block.clear();
        }
        block.push_back(tok);
    }
    if (!block.empty()) sample.documents.push_back(make_document(std::nullopt, render_tokens(block)));
    if (auto truth = exact_oracle(task, task.query_slot)) {
        sample.gold_answer = std::to_string(*truth);
    }
    return sample;
}

std::string question_for_slot(int slot_index) {
    return "value of s" + std::to_string(slot_index) + "?";
}

std::optional<int> slot_of_question(const std::string& question_text) {
    constexpr const char* kPrefix = "value of s";
    if (question_text.rfind(kPrefix, 0) != 0) return std::nullopt;
    std::size_t pos = std::string(kPrefix).size();
    int idx = 0;
    bool any = false;
    while (pos < question_text.size() && std::isdigit(static_cast<unsigned char>(question_text[pos]))) {
        idx = idx * 10 + (question_text[pos] - '0');
        ++pos;
        any = true;
    }
    if (!any || pos >= question_text.size() || question_text[pos] != '?') return std::nullopt;
    if (idx < 0 || idx >= Vocab::kNumSlots) return std::nullopt;
    return idx;
}

ProposedParse parse_micro_claims(const std::vector<int>& tokens) {
    ProposedParse result;
    std::size_t i = 0;
    while (i < tokens.size()) {
        if (tokens[i] != Vocab::kQ) {
            ++i;
            continue;
        }
        // <Q> slot <A> digit+ <SEP>
        std::size_t j = i + 1;
        bool ok = j < tokens.size() && Vocab::is_slot(tokens[j]);
        const int slot = ok ? Vocab::slot_index(tokens[j]) : -1;
        ++j;
        ok = ok && j < tokens.size() && tokens[j] == Vocab::kA;
        ++j;
        std::string digits;
        while (ok && j < tokens.size() && Vocab::is_digit(tokens[j])) {
            digits += static_cast<char>('0' + tokens[j]);
            ++j;
        }
        ok = ok && !digits.empty() && j < tokens.size() && tokens[j] == Vocab::kSep;
        if (!ok) {
            ++result.malformed_lines;
            ++i;
            continue;
        }
        ClaimQA claim;
        claim.question = question_for_slot(slot);
        claim.asserted_answer = *canonicalize_number(digits).answer;
        claim.source_span = {{i, j + 1}};
        result.claims.push_back(std::move(claim));
        i = j + 1;
    }
    return result;
}

std::vector<int> format_micro_claims(const std::vector<ClaimQA>& claims) {
    std::vector<int> tokens;
    for (const auto& c : claims) {
        const auto slot = slot_of_question(c.question);
        if (!slot) throw std::invalid_argument("not a micro-grammar question: " + c.question);
        tokens.push_back(Vocab::kQ);
        tokens.push_back(Vocab::slot_token(*slot));
        tokens.push_back(Vocab::kA);
        for (char ch : c.asserted_answer.canonical) {
            if (!std::isdigit(static_cast<unsigned char>(ch))) {
                throw std::invalid_argument("micro grammar answers are unsigned integers");
            }
            tokens.push_back(ch - '0');
        }
        tokens.push_back(Vocab::kSep);
    }
    return tokens;
}

std::vector<CheckedAnswer> parse_micro_answers(const std::vector<int>& tokens,
                                               std::size_t n_questions) {
    std::vector<CheckedAnswer> result;
    std::size_t index = 0;
    std::size_t i = 0;
    while (i < tokens.size() && index < n_questions) {
        if (tokens[i] != Vocab::kA) {
            ++i;
            continue;
        }
        ++index;  // this group answers question `index`, well-formed or not
        std::size_t j = i + 1;
        CheckedAnswer answer;
        answer.index = index;
        if (j < tokens.size() && tokens[j] == Vocab::kNul) {
            ++j;
            if (j < tokens.size() && tokens[j] == Vocab::kSep) {
                answer.verdict = CannotAnswer{};
                result.push_back(std::move(answer));
                i = j + 1;
                continue;
            }
            i = j;  // malformed, index stays absent
            continue;
        }
        std::string digits;
        while (j < tokens.size() && Vocab::is_digit(tokens[j])) {
            digits += static_cast<char>('0' + tokens[j]);
            ++j;
        }
        if (!digits.empty() && j < tokens.size() && tokens[j] == Vocab::kSep) {
            answer.verdict = *canonicalize_number(digits).answer;
            result.push_back(std::move(answer));
            i = j + 1;
        } else {
            i = j;  // malformed, absent
        }
    }
    return result;
}

// --- policy ---------------------------------------------------------------

struct ToyPolicy::Cache {
    std::vector<int> window;      // padded context, size W
    std::vector<double> x;        // concat embeddings, size W*E
    std::vector<double> h;        // hidden activations, size H
    std::vector<double> logits;   // size V
    double value = 0.0;
};

ToyPolicy::ToyPolicy(PolicyConfig config, uint64_t seed) : config_(config) {
    const int V = Vocab::kSize;
    const int W = config_.context_window;
    const int E = config_.embed_dim;
    const int H = config_.hidden_dim;
    off_embed_ = 0;
    off_w1_ = off_embed_ + static_cast<std::size_t>(V) * E;
    off_b1_ = off_w1_ + static_cast<std::size_t>(H) * W * E;
    off_w2_ = off_b1_ + static_cast<std::size_t>(H);
    off_b2_ = off_w2_ + static_cast<std::size_t>(V) * H;
    off_wv_ = off_b2_ + static_cast<std::size_t>(V);
    off_bv_ = off_wv_ + static_cast<std::size_t>(H);
    params_.resize(off_bv_ + 1);

    std::mt19937_64 rng(splitmix64(seed));
    std::normal_distribution<double> init(0.0, 0.08);
    for (double& p : params_) p = init(rng);
}

void ToyPolicy::run_forward(const std::vector<int>& context, Cache& cache) const {
    const int V = Vocab::kSize;
    const int W = config_.context_window;
    const int E = config_.embed_dim;
    const int H = config_.hidden_dim;

    cache.window.assign(static_cast<std::size_t>(W), Vocab::kEos);
    const std::size_t take = std::min<std::size_t>(context.size(), static_cast<std::size_t>(W));
    for (std::size_t k = 0; k < take; ++k) {
        cache.window[W - take + k] = context[context.size() - take + k];
    }

    cache.x.resize(static_cast<std::size_t>(W) * E);
    for (int w = 0; w < W; ++w) {
        const double* emb = &params_[off_embed_ + static_cast<std::size_t>(cache.window[w]) * E];
        std::copy(emb, emb + E, cache.x.begin() + static_cast<std::size_t>(w) * E);
    }

    cache.h.resize(static_cast<std::size_t>(H));
    const std::size_t WE = static_cast<std::size_t>(W) * E;
    for (int j = 0; j < H; ++j) {
        double acc = params_[off_b1_ + j];
        const double* row = &params_[off_w1_ + static_cast<std::size_t>(j) * WE];
        for (std::size_t i = 0; i < WE; ++i) acc += row[i] * cache.x[i];
        cache.h[j] = std::tanh(acc);
    }

    cache.logits.resize(static_cast<std::size_t>(V));
    for (int k = 0; k < V; ++k) {
        double acc = params_[off_b2_ + k];
        const double* row = &params_[off_w2_ + static_cast<std::size_t>(k) * H];
        for (int j = 0; j < H; ++j) acc += row[j] * cache.h[j];
        cache.logits[k] = acc;
    }

    double v = params_[off_bv_];
    for (int j = 0; j < H; ++j) v += params_[off_wv_ + j] * cache.h[j];
    cache.value = v;
}

ToyPolicy::StepOut ToyPolicy::forward(const std::vector<int>& context) const {
    Cache cache;
    run_forward(context, cache);
    return {std::move(cache.logits), cache.value};
}

void ToyPolicy::backward(const std::vector<int>& context, const std::vector<double>& dlogits,
                         double dvalue, std::vector<double>& grad) const {
    const int V = Vocab::kSize;
    const int W = config_.context_window;
    const int E = config_.embed_dim;
    const int H = config_.hidden_dim;
    if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);

    Cache cache;
    run_forward(context, cache);

    std::vector<double> dh(static_cast<std::size_t>(H), 0.0);
    for (int k = 0; k < V; ++k) {
        const double g = dlogits[static_cast<std::size_t>(k)];
        if (g == 0.0) continue;
        grad[off_b2_ + k] += g;
        const double* row = &params_[off_w2_ + static_cast<std::size_t>(k) * H];
        double* grow = &grad[off_w2_ + static_cast<std::size_t>(k) * H];
        for (int j = 0; j < H; ++j) {
            grow[j] += g * cache.h[j];
            dh[j] += g * row[j];
        }
    }
    if (dvalue != 0.0) {
        grad[off_bv_] += dvalue;
        for (int j = 0; j < H; ++j) {
            grad[off_wv_ + j] += dvalue * cache.h[j];
            dh[j] += dvalue * params_[off_wv_ + j];
        }
    }

    const std::size_t WE = static_cast<std::size_t>(W) * E;
    std::vector<double> dx(WE, 0.0);
    for (int j = 0; j < H; ++j) {
        const double dpre = dh[j] * (1.0 - cache.h[j] * cache.h[j]);
        if (dpre == 0.0) continue;
        grad[off_b1_ + j] += dpre;
        const double* row = &params_[off_w1_ + static_cast<std::size_t>(j) * WE];
        double* grow = &grad[off_w1_ + static_cast<std::size_t>(j) * WE];
        for (std::size_t i = 0; i < WE; ++i) {
            grow[i] += dpre * cache.x[i];
            dx[i] += dpre * row[i];
        }
    }
    for (int w = 0; w < W; ++w) {
        double* gemb = &grad[off_embed_ + static_cast<std::size_t>(cache.window[w]) * E];
        for (int e = 0; e < E; ++e) gemb[e] += dx[static_cast<std::size_t>(w) * E + e];
    }
}

std::vector<double> masked_log_probs(const std::vector<double>& logits,
                                     const std::vector<uint8_t>& allowed, double temperature) {
    const double t = temperature > 0.0 ? temperature : 1.0;
    double max_z = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (allowed[k]) max_z = std::max(max_z, logits[k] / t);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (allowed[k]) sum += std::exp(logits[k] / t - max_z);
    }
    const double lse = max_z + std::log(sum);
    std::vector<double> lp(logits.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (allowed[k]) lp[k] = logits[k] / t - lse;
    }
    return lp;
}

std::vector<double> masked_log_probs_backward(const std::vector<double>& logits,
                                              const std::vector<uint8_t>& allowed,
                                              double temperature,
                                              const std::vector<double>& dlogprobs) {
    const double t = temperature > 0.0 ? temperature : 1.0;
    const std::vector<double> lp = masked_log_probs(logits, allowed, temperature);
    double dsum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (allowed[k]) dsum += dlogprobs[k];
    }
    std::vector<double> dlogits(logits.size(), 0.0);
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (!allowed[k]) continue;
        const double p = std::exp(lp[k]);
        dlogits[k] = (dlogprobs[k] - p * dsum) / t;
    }
    return dlogits;
}

// --- grammar ----------------------------------------------------------------

GrammarState::GrammarState(GrammarSpec spec) : spec_(spec) {
    state_ = spec_.role == Role::Solver ? S::free : S::boundary;
}

std::vector<uint8_t> GrammarState::allowed() const {
    std::vector<uint8_t> mask(Vocab::kSize, 0);
    auto allow_digits = [&] {
        for (int d = 0; d < 10; ++d) mask[d] = 1;
    };
    switch (spec_.role) {
        case Role::Solver:
            // digit* <EOS>, digit run capped
            if (digit_run_ < spec_.max_answer_digits) allow_digits();
            mask[Vocab::kEos] = 1;
            break;
        case Role::Proposer:
            switch (state_) {
                case S::boundary:
                    if (pairs_ < spec_.max_pairs) mask[Vocab::kQ] = 1;
                    if (pairs_ >= spec_.min_pairs) mask[Vocab::kEos] = 1;
                    break;
                case S::after_q:
                    for (int s = 0; s < Vocab::kNumSlots; ++s) mask[Vocab::slot_token(s)] = 1;
                    break;
                case S::after_slot:
                    mask[Vocab::kA] = 1;
                    break;
                case S::after_a:
                    allow_digits();
                    break;
                case S::in_digits:
                    if (digit_run_ < spec_.max_answer_digits) allow_digits();
                    mask[Vocab::kSep] = 1;
                    break;
                default:
                    mask[Vocab::kEos] = 1;
                    break;
            }
            break;
        case Role::Checker:
            switch (state_) {
                case S::boundary:
                    if (pairs_ < spec_.n_questions) {
                        mask[Vocab::kA] = 1;
                    } else {
                        mask[Vocab::kEos] = 1;
                    }
                    break;
                case S::after_a:
                    allow_digits();
                    mask[Vocab::kNul] = 1;
                    break;
                case S::in_digits:
                    if (digit_run_ < spec_.max_answer_digits) allow_digits();
                    mask[Vocab::kSep] = 1;
                    break;
                case S::after_nul:
                    mask[Vocab::kSep] = 1;
                    break;
                default:
                    mask[Vocab::kEos] = 1;
                    break;
            }
            break;
    }
    return mask;
}

void GrammarState::advance(int token) {
    if (token == Vocab::kEos) {
        done_ = true;
        return;
    }
    switch (spec_.role) {
        case Role::Solver:
            if (Vocab::is_digit(token)) ++digit_run_;
            break;
        case Role::Proposer:
            if (token == Vocab::kQ) {
                state_ = S::after_q;
            } else if (Vocab::is_slot(token)) {
                state_ = S::after_slot;
            } else if (token == Vocab::kA) {
                state_ = S::after_a;
                digit_run_ = 0;
            } else if (Vocab::is_digit(token)) {
                ++digit_run_;
                state_ = S::in_digits;
            } else if (token == Vocab::kSep) {
                ++pairs_;
                state_ = S::boundary;
            }
            break;
        case Role::Checker:
            if (token == Vocab::kA) {
                state_ = S::after_a;
                digit_run_ = 0;
            } else if (Vocab::is_digit(token)) {
                ++digit_run_;
                state_ = S::in_digits;
            } else if (token == Vocab::kNul) {
                state_ = S::after_nul;
            } else if (token == Vocab::kSep) {
                ++pairs_;
                state_ = S::boundary;
            }
            break;
    }
}

TokenGeneration toy_role_generate(const ToyPolicy& policy, Role role,
                                  const std::vector<int>& context, const GrammarSpec& grammar,
                                  double temperature, int max_tokens, uint64_t seed) {
    std::vector<int> full_context;
    full_context.reserve(context.size() + 1);
    full_context.push_back(Vocab::role_token(role));
    full_context.insert(full_context.end(), context.begin(), context.end());

    GrammarState state(grammar);
    std::mt19937_64 rng(splitmix64(seed));
    TokenGeneration gen;
    gen.finish_reason = FinishReason::length;

    for (int step = 0; step < max_tokens; ++step) {
        const auto out = policy.forward(full_context);
        const auto mask = state.allowed();
        const auto lp = masked_log_probs(out.logits, mask, temperature);

        int chosen;
        if (temperature <= 0.0) {
            chosen = static_cast<int>(std::distance(
                lp.begin(), std::max_element(lp.begin(), lp.end())));
        } else {
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            const double u = unif(rng);
            double acc = 0.0;
            chosen = -1;
            for (std::size_t k = 0; k < lp.size(); ++k) {
                if (!mask[k]) continue;
                acc += std::exp(lp[k]);
                if (u <= acc) {
                    chosen = static_cast<int>(k);
                    break;
                }
            }
            if (chosen < 0) {  // numeric slack at the tail
                for (int k = Vocab::kSize - 1; k >= 0; --k) {
                    if (mask[k]) {
                        chosen = k;
                        break;
                    }
                }
            }
        }

        gen.tokens.push_back(chosen);
        gen.logprobs.push_back(lp[static_cast<std::size_t>(chosen)]);
        gen.masks.push_back(mask);
        full_context.push_back(chosen);
        state.advance(chosen);
        if (state.done()) {
            gen.finish_reason = FinishReason::stop;
            break;
        }
    }
    return gen;
}

std::vector<int> solver_context(const ToyTask& task) {
    std::vector<int> ctx = task.serialized_docs;
    ctx.push_back(Vocab::kQ);
    ctx.push_back(Vocab::slot_token(task.query_slot));
    return ctx;
}

std::vector<int> proposer_context(const std::vector<int>& solver_output) {
    return solver_output;
}

std::vector<int> checker_context(const ToyTask& task, const std::vector<int>& question_slots) {
    std::vector<int> ctx = task.serialized_docs;
    for (int slot : question_slots) {
        ctx.push_back(Vocab::kQ);
        ctx.push_back(Vocab::slot_token(slot));
    }
    return ctx;
}

// --- pipeline adapters ------------------------------------------------------

ToyBackend::ToyBackend(std::shared_ptr<const ToyPolicy> policy, int min_questions)
    : policy_(std::move(policy)), min_questions_(min_questions) {}

std::vector<Generation> ToyBackend::generate(const RolePrompt& prompt,
                                             const SamplingConfig& config) {
    if ((config.top_k != 0 || config.top_p < 1.0) && !warned_.exchange(true)) {
        std::fprintf(stderr, "[toy backend] top_k/top_p are not supported and are ignored\n");
    }
    const std::vector<int> context = parse_tokens(prompt.text);

    GrammarSpec grammar;
    grammar.role = prompt.role;
    if (prompt.role == Role::Proposer) {
        grammar.min_pairs = min_questions_;
    } else if (prompt.role == Role::Checker) {
        grammar.n_questions = static_cast<int>(
            std::count(context.begin(), context.end(), Vocab::kQ));
    }

    const uint64_t base_seed = config.seed.value_or(0x5eedull);
    std::vector<Generation> out;
    out.reserve(static_cast<std::size_t>(config.n_samples));
    for (int i = 0; i < config.n_samples; ++i) {
        const auto gen = toy_role_generate(*policy_, prompt.role, context, grammar,
                                           config.temperature, config.max_tokens,
                                           splitmix64(base_seed + static_cast<uint64_t>(i)));
        Generation g;
        g.text = render_tokens(gen.tokens);
        g.token_logprobs = gen.logprobs;
        g.finish_reason = gen.finish_reason;
        out.push_back(std::move(g));
    }
    return out;
}

RolePrompt ToyCodec::solver_prompt(const RagSample& sample) const {
    std::vector<int> ctx;
    for (const auto& doc : sample.documents) {
        const auto tokens = parse_tokens(doc.body);
        ctx.insert(ctx.end(), tokens.begin(), tokens.end());
    }
    ctx.push_back(Vocab::kQ);
    const auto slot = Vocab::id_of(sample.query);
    if (!slot || !Vocab::is_slot(*slot)) {
        throw std::invalid_argument("toy sample query must be a slot token, got: " + sample.query);
    }
    ctx.push_back(*slot);
    return {Role::Solver, render_tokens(ctx), "toy-v1"};
}

RolePrompt ToyCodec::proposer_prompt(const std::string& solver_text) const {
    return {Role::Proposer, solver_text, "toy-v1"};
}

RolePrompt ToyCodec::checker_prompt(const std::vector<std::string>& questions,
                                    const RagSample& sample) const {
    std::vector<int> ctx;
    for (const auto& doc : sample.documents) {
        const auto tokens = parse_tokens(doc.body);
        ctx.insert(ctx.end(), tokens.begin(), tokens.end());
    }
    for (const auto& q : questions) {
        const auto slot = slot_of_question(q);
        if (!slot) throw std::invalid_argument("not a micro-grammar question: " + q);
        ctx.push_back(Vocab::kQ);
        ctx.push_back(Vocab::slot_token(*slot));
    }
    return {Role::Checker, render_tokens(ctx), "toy-v1"};
}

ProposedParse ToyCodec::parse_claims(const std::string& proposer_text) const {
    return parse_micro_claims(parse_tokens(proposer_text));
}

std::vector<CheckedAnswer> ToyCodec::parse_answers(const std::string& checker_text,
                                                   std::size_t n_questions) const {
    return parse_micro_answers(parse_tokens(checker_text), n_questions);
}

}  // namespace toy
}  // namespace march

#include "editflip/mocks.hpp"

#include <algorithm>
#include <sstream>

#include "editflip/errors.hpp"
#include "editflip/util.hpp"

namespace editflip {

namespace {

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string token;
    while (in >> token) {
        tokens.push_back(token);
    }
    return tokens;
}

std::string render_edit_lines(const std::vector<EditPair>& edits) {
    std::ostringstream out;
    for (std::size_t i = 0; i < edits.size(); ++i) {
        out << (i + 1) << ". (\"" << edits[i].prev << "\" , \"" << edits[i].next << "\")\n";
    }
    return out.str();
}

const std::unordered_map<std::string, std::string>& synonym_table() {
    static const std::unordered_map<std::string, std::string> table = {
        {"image", "picture"},       {"picture", "image"},
        {"shows", "depicts"},       {"depicts", "shows"},
        {"demonstrates", "shows"},  {"ultrasound", "sonographic"},
        {"sonographic", "ultrasound"},
        {"seen", "visible"},        {"visible", "seen"},
        {"What", "Which"},          {"Which", "What"},
        {"what", "which"},          {"which", "what"},
        {"most", "best"},           {"likely", "probable"},
        {"probable", "likely"},     {"abnormality", "anomaly"},
        {"anomaly", "abnormality"}, {"finding", "observation"},
        {"observation", "finding"}, {"patient", "subject"},
        {"scan", "exam"},           {"exam", "scan"},
        {"structure", "feature"},   {"feature", "structure"},
        {"region", "area"},         {"area", "region"},
        {"identify", "name"},       {"describe", "characterize"},
        {"lesion", "mass"},         {"mass", "lesion"},
        {"malignant", "cancerous"}, {"cancerous", "malignant"},
        {"benign", "harmless"},     {"tumor", "growth"},
        {"growth", "tumor"},        {"normal", "unremarkable"},
        {"acute", "sudden"},        {"chronic", "longstanding"},
        {"overall", "in general"},  {"fracture", "break"},
    };
    return table;
}

}  // namespace

void validate_mock_config(const MockScorerConfig& config) {
    if (config.options.empty()) {
        throw ConfigError("mock scorer config has no options");
    }
    if (config.base_scores.size() != config.options.size()) {
        std::ostringstream msg;
        msg << "mock scorer config has " << config.options.size() << " options but "
            << config.base_scores.size() << " base scores";
        throw ConfigError(msg.str());
    }
    for (const MockScoreRule& rule : config.rules) {
        if (rule.keyword.empty()) {
            throw ConfigError("mock scorer rule has an empty keyword");
        }
        if (rule.option_index < 0 ||
            rule.option_index >= static_cast<int>(config.options.size())) {
            std::ostringstream msg;
            msg << "mock scorer rule targets option " << rule.option_index
                << " but the config has " << config.options.size() << " options";
            throw ConfigError(msg.str());
        }
    }
}

double mock_logit(const MockScorerConfig& config, const std::string& question,
                  std::size_t option_index) {
    double logit = config.base_scores.at(option_index);
    for (const MockScoreRule& rule : config.rules) {
        if (rule.option_index == static_cast<int>(option_index) &&
            question.find(rule.keyword) != std::string::npos) {
            logit += rule.delta;
        }
    }
    return logit;
}

void MockScorer::set_default_config(MockScorerConfig config) {
    validate_mock_config(config);
    default_config_ = std::move(config);
}

void MockScorer::add_config(const std::string& image_ref, MockScorerConfig config) {
    validate_mock_config(config);
    if (!configs_.emplace(image_ref, std::move(config)).second) {
        throw ConfigError("mock scorer already has a config for image_ref \"" + image_ref + "\"");
    }
}

const MockScorerConfig* MockScorer::config_for(const std::string& image_ref) const {
    auto it = configs_.find(image_ref);
    if (it != configs_.end()) {
        return &it->second;
    }
    if (default_config_) {
        return &*default_config_;
    }
    return nullptr;
}

TokenLogprobs MockScorer::score_continuation(const std::string& context,
                                             const std::string& continuation,
                                             const std::string& image_ref) {
    score_calls_.fetch_add(1, std::memory_order_relaxed);
    const MockScorerConfig* config = config_for(image_ref);
    if (config == nullptr) {
        throw BackendError("mock scorer has no config for image_ref \"" + image_ref + "\"");
    }
    auto it = std::find(config->options.begin(), config->options.end(), continuation);
    if (it == config->options.end()) {
        throw ProtocolError("mock scorer was asked to score \"" + continuation +
                            "\", which is not one of its options");
    }
    const auto option_index = static_cast<std::size_t>(it - config->options.begin());

    TokenLogprobs result;
    result.tokens = {context, continuation};
    result.logprobs = {0.0, mock_logit(*config, context, option_index)};
    result.context_len = 1;
    result.raw_logits = true;
    return result;
}

MockScorerConfig default_world_config(const McqInstance& instance, std::uint64_t seed) {
    MockScorerConfig config;
    config.options = instance.options;
    config.base_scores.assign(instance.options.size(), 0.0);

    std::uint64_t state = seed ^ fnv1a64(instance.id);
    splitmix64(state);  // decorrelate ids that differ in few bits
    const bool misclassified = splitmix_unit(state) < 0.30;

    for (std::size_t i = 0; i < config.base_scores.size(); ++i) {
        if (static_cast<int>(i) == instance.truth_index) {
            continue;
        }
        config.base_scores[i] = 0.1 + 0.5 * splitmix_unit(state);
    }
    if (!misclassified) {
        // Anchor the correct answer on the longest word of the original
        // question; edits that disturb that word pull the anchor out.
        config.base_scores[static_cast<std::size_t>(instance.truth_index)] = 0.4;
        std::string anchor;
        for (const std::string& word : whitespace_tokens(instance.question)) {
            if (word.size() > anchor.size()) {
                anchor = word;
            }
        }
        if (!anchor.empty()) {
            config.rules.push_back({anchor, instance.truth_index, 0.8});
        } else {
            config.base_scores[static_cast<std::size_t>(instance.truth_index)] = 1.2;
        }
    }
    return config;
}

std::string default_world_ref(const std::string& instance_id) {
    return "mock://" + instance_id;
}

void ScriptedEditGenerator::script(const std::string& question, std::vector<EditPair> edits) {
    std::lock_guard<std::mutex> lock(mu_);
    scripts_[question] = std::move(edits);
}

void ScriptedEditGenerator::set_fallback_text(std::string text) {
    std::lock_guard<std::mutex> lock(mu_);
    fallback_text_ = std::move(text);
}

std::string ScriptedEditGenerator::generate(const EditProposalRequest& request) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard<std::mutex> lock(mu_);
    asked_.push_back(request.current_question);
    auto it = scripts_.find(request.current_question);
    if (it == scripts_.end()) {
        return fallback_text_;
    }
    return render_edit_lines(it->second);
}

std::vector<std::string> ScriptedEditGenerator::questions_asked() const {
    std::lock_guard<std::mutex> lock(mu_);
    return asked_;
}

RandomEditGenerator::RandomEditGenerator(std::uint64_t seed) : seed_(seed) {}

std::string RandomEditGenerator::generate(const EditProposalRequest& request) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    std::lock_guard<std::mutex> lock(mu_);
    std::mt19937_64& rng =
        streams_.try_emplace(request.instance_id, seed_ ^ fnv1a64(request.instance_id))
            .first->second;

    const std::vector<std::string> words = whitespace_tokens(request.current_question);
    const auto& synonyms = synonym_table();

    // Candidate moves are built fresh each call from the current question;
    // duplicates against the attack history are skipped so the generator
    // behaves like a model that actually read the "do not repeat" clause.
    std::vector<EditPair> chosen;
    EditHistory batch_seen;
    auto accept = [&](EditPair edit) {
        if (!is_valid_edit_pair(edit)) {
            return;
        }
        if (request.current_question.find(edit.prev) == std::string::npos) {
            return;
        }
        if (request.history != nullptr && request.history->contains(edit)) {
            return;
        }
        if (batch_seen.insert(edit)) {
            chosen.push_back(std::move(edit));
        }
    };

    const int wanted = std::max(1, request.num_edits);
    std::uniform_int_distribution<std::size_t> pick_word(0, words.empty() ? 0 : words.size() - 1);
    std::uniform_int_distribution<int> pick_move(0, 3);
    for (int attempt = 0; attempt < 40 && static_cast<int>(chosen.size()) < wanted; ++attempt) {
        if (words.empty()) {
            break;
        }
        const std::size_t w = pick_word(rng);
        switch (pick_move(rng)) {
            case 0: {  // synonym swap
                auto syn = synonyms.find(words[w]);
                if (syn != synonyms.end()) {
                    accept({syn->first, syn->second});
                }
                break;
            }
            case 1: {  // punctuation tweak on the word
                const std::string& word = words[w];
                const char tail = word.back();
                if (tail == ',' || tail == '.' || tail == '?') {
                    accept({word, word.substr(0, word.size() - 1)});
                } else {
                    accept({word, word + ","});
                }
                break;
            }
            case 2: {  // word deletion, eating one adjacent space
                const std::string& word = words[w];
                if (request.current_question.find(word + " ") != std::string::npos) {
                    accept({word + " ", ""});
                } else if (request.current_question.find(" " + word) != std::string::npos) {
                    accept({" " + word, ""});
                }
                break;
            }
            default: {  // adjacent word-order swap
                if (w + 1 < words.size()) {
                    accept({words[w] + " " + words[w + 1], words[w + 1] + " " + words[w]});
                }
                break;
            }
        }
    }

    if (chosen.empty()) {
        return "I could not find a safe edit for this question.";
    }
    std::string body = render_edit_lines(chosen);
    if (rng() % 8 == 0) {
        return "Sure! Here are the edits you asked for:\n" + body + "Hope that helps.";
    }
    return body;
}

MockEmbedder::MockEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) {
        throw ConfigError("mock embedder dimension must be positive");
    }
}

EmbeddingVector MockEmbedder::embed(const std::string& text) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    EmbeddingVector vec;
    vec.values.reserve(dim_);
    std::uint64_t state = seed_ ^ fnv1a64(text);
    splitmix64(state);
    for (std::size_t i = 0; i < dim_; ++i) {
        vec.values.push_back(2.0 * splitmix_unit(state) - 1.0);
    }
    return vec;
}

MockPerplexityEvaluator::MockPerplexityEvaluator(std::uint64_t seed) : seed_(seed) {}

void MockPerplexityEvaluator::set_uniform_logprob(const std::string& text, double logprob) {
    pinned_[text] = logprob;
}

TokenLogprobs MockPerplexityEvaluator::score_continuation(const std::string& /*context*/,
                                                          const std::string& continuation,
                                                          const std::string& /*image_ref*/) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    std::vector<std::string> tokens = whitespace_tokens(continuation);
    if (tokens.empty()) {
        tokens.push_back(continuation);
    }

    TokenLogprobs result;
    result.context_len = 0;
    result.raw_logits = false;

    auto pinned = pinned_.find(continuation);
    std::uint64_t state = seed_ ^ fnv1a64(continuation);
    splitmix64(state);
    for (std::string& token : tokens) {
        const double lp = pinned != pinned_.end() ? pinned->second
                                                  : -0.2 - 3.0 * splitmix_unit(state);
        result.tokens.push_back(std::move(token));
        result.logprobs.push_back(lp);
    }
    return result;
}

}  // namespace editflip

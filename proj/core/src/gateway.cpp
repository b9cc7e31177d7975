#include "editflip/gateway.hpp"

#include <cmath>
#include <sstream>

#include "editflip/errors.hpp"
#include "editflip/util.hpp"

namespace editflip {

namespace {

/// One candidate-edit instruction, versioned; runs record its hash so a
/// results file can be tied to the exact prompt that produced it.
constexpr std::string_view kEditPromptVersion = "q-edit-v1";
constexpr std::string_view kEditPrompt =
    "You are refining the wording of a multiple-choice question about a medical image.\n"
    "Propose exactly {num_edits} small text edits to the question below. Allowed edits:\n"
    "replacing a word with a synonym, adjusting punctuation, or minor word-order tweaks.\n"
    "Do not change any option labels, do not alter the meaning of the question, and do\n"
    "not rewrite more than necessary. Each edit must quote a fragment that appears\n"
    "verbatim in the current question.\n"
    "\n"
    "Current question:\n"
    "{question}\n"
    "\n"
    "Edits already tried (do not propose these again):\n"
    "{history}\n"
    "\n"
    "Answer with one edit per line, numbered, in the form:\n"
    "1. (\"previous fragment\" , \"new fragment\")\n";

std::string_view strip_one_quote_layer(std::string_view text) {
    if (text.size() >= 2) {
        const char first = text.front();
        if ((first == '"' || first == '\'') && text.back() == first) {
            return text.substr(1, text.size() - 2);
        }
    }
    return text;
}

std::string normalize_side(std::string_view raw) {
    return std::string(strip_one_quote_layer(trim(raw)));
}

/// Finds `sep` outside single- or double-quoted spans. Returns npos if the
/// separator only occurs inside quotes (or not at all).
std::size_t find_outside_quotes(std::string_view body, std::string_view sep) {
    char open = '\0';
    for (std::size_t i = 0; i < body.size(); ++i) {
        const char c = body[i];
        if (open != '\0') {
            if (c == open) {
                open = '\0';
            }
            continue;
        }
        if (c == '"' || c == '\'') {
            open = c;
            continue;
        }
        if (body.compare(i, sep.size(), sep) == 0) {
            return i;
        }
    }
    return std::string_view::npos;
}

/// Splits one parenthesized group body into (prev, next), or returns false
/// when no separator is present. "->" (and its Unicode arrow form) wins over
/// a comma so generator outputs like ("a, b" -> "c") split correctly.
bool split_pair_body(std::string_view body, EditPair& out) {
    struct Separator {
        std::string_view token;
    };
    static constexpr Separator separators[] = {{"->"}, {"\xE2\x86\x92"}, {","}};
    for (const Separator& sep : separators) {
        const std::size_t pos = find_outside_quotes(body, sep.token);
        if (pos != std::string_view::npos) {
            out.prev = normalize_side(body.substr(0, pos));
            out.next = normalize_side(body.substr(pos + sep.token.size()));
            return true;
        }
    }
    return false;
}

}  // namespace

std::vector<EditPair> parse_edit_pairs(std::string_view raw_text) {
    std::vector<EditPair> pairs;
    std::size_t i = 0;
    while (i < raw_text.size()) {
        if (raw_text[i] != '(') {
            ++i;
            continue;
        }
        // Find the matching close paren, tracking nesting so a fragment like
        // ("lesion (hypoechoic)" , "lesion") stays one group.
        std::size_t depth = 1;
        std::size_t j = i + 1;
        char open_quote = '\0';
        while (j < raw_text.size() && depth > 0) {
            const char c = raw_text[j];
            if (open_quote != '\0') {
                if (c == open_quote) {
                    open_quote = '\0';
                }
            } else if (c == '"' || c == '\'') {
                open_quote = c;
            } else if (c == '(') {
                ++depth;
            } else if (c == ')') {
                --depth;
            }
            ++j;
        }
        if (depth != 0) {
            break;  // unbalanced tail; nothing more to extract
        }
        const std::string_view body = raw_text.substr(i + 1, j - i - 2);
        EditPair pair;
        if (split_pair_body(body, pair)) {
            pairs.push_back(std::move(pair));
        }
        i = j;
    }
    if (pairs.empty()) {
        throw ProposalParseError(std::string(raw_text));
    }
    return pairs;
}

ProposalBatch propose_edits(EditGeneratorBackend& backend, const EditProposalRequest& request) {
    if (request.num_edits <= 0) {
        throw ConfigError("num_edits must be positive");
    }
    ProposalBatch batch;
    batch.raw_text = backend.generate(request);
    std::vector<EditPair> parsed = parse_edit_pairs(batch.raw_text);
    batch.parsed = parsed.size();
    EditHistory batch_seen;
    for (EditPair& pair : parsed) {
        if (!is_valid_edit_pair(pair)) {
            ++batch.invalid;
            continue;
        }
        const bool in_history = request.history != nullptr && request.history->contains(pair);
        if (in_history || !batch_seen.insert(pair)) {
            ++batch.duplicates;
            continue;
        }
        if (batch.edits.size() < static_cast<std::size_t>(request.num_edits)) {
            batch.edits.push_back(std::move(pair));
        }
    }
    return batch;
}

TokenLogprobs score_continuation(ScorerBackend& backend, const std::string& context,
                                 const std::string& continuation, const std::string& image_ref) {
    if (continuation.empty()) {
        throw ProtocolError("cannot score an empty continuation");
    }
    TokenLogprobs result = backend.score_continuation(context, continuation, image_ref);
    if (result.tokens.size() != result.logprobs.size()) {
        std::ostringstream msg;
        msg << "scorer returned " << result.tokens.size() << " tokens but "
            << result.logprobs.size() << " logprobs";
        throw ProtocolError(msg.str());
    }
    if (result.context_len > result.logprobs.size()) {
        std::ostringstream msg;
        msg << "scorer context_len " << result.context_len << " exceeds token count "
            << result.logprobs.size();
        throw ProtocolError(msg.str());
    }
    if (result.continuation_tokens() == 0) {
        throw ProtocolError("scorer returned no continuation tokens");
    }
    for (double lp : result.logprobs) {
        if (!std::isfinite(lp)) {
            throw ProtocolError("scorer returned a non-finite logprob");
        }
        if (!result.raw_logits && lp > 0.0) {
            std::ostringstream msg;
            msg << "scorer returned positive logprob " << lp
                << " without declaring raw logits";
            throw ProtocolError(msg.str());
        }
    }
    return result;
}

EmbedderGateway::EmbedderGateway(std::shared_ptr<EmbedderBackend> backend)
    : backend_(std::move(backend)) {
    if (!backend_) {
        throw ConfigError("EmbedderGateway requires a backend");
    }
}

const EmbeddingVector& EmbedderGateway::embed(const std::string& text) {
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(text);
        if (it != cache_.end()) {
            return it->second;
        }
    }
    // The backend call happens unlocked so slow embedders do not serialize
    // every worker; a racing duplicate costs one extra call and the first
    // inserted value wins (deterministic backends return equal vectors).
    EmbeddingVector vec = backend_->embed(text);
    if (vec.values.empty()) {
        throw ProtocolError("embedder returned an empty vector");
    }
    std::lock_guard<std::mutex> lock(mu_);
    ++backend_calls_;
    if (dimension_ == 0) {
        dimension_ = vec.values.size();
    } else if (vec.values.size() != dimension_) {
        std::ostringstream msg;
        msg << "embedder dimension changed from " << dimension_ << " to " << vec.values.size();
        throw ProtocolError(msg.str());
    }
    return cache_.emplace(text, std::move(vec)).first->second;
}

std::size_t EmbedderGateway::cache_size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.size();
}

std::size_t EmbedderGateway::backend_calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return backend_calls_;
}

std::string_view edit_prompt_template_version() { return kEditPromptVersion; }
std::string_view edit_prompt_template() { return kEditPrompt; }
std::uint64_t edit_prompt_template_hash() { return fnv1a64(kEditPrompt); }

std::string render_edit_prompt(const EditProposalRequest& request) {
    std::string history_text;
    if (request.history == nullptr || request.history->empty()) {
        history_text = "(none)";
    } else {
        std::ostringstream lines;
        bool first = true;
        for (const EditPair& pair : request.history->pairs()) {
            if (!first) {
                lines << '\n';
            }
            first = false;
            lines << "(\"" << pair.prev << "\" , \"" << pair.next << "\")";
        }
        history_text = lines.str();
    }

    std::string prompt(kEditPrompt);
    auto replace_all = [&prompt](std::string_view placeholder, const std::string& value) {
        std::size_t pos = 0;
        while ((pos = prompt.find(placeholder, pos)) != std::string::npos) {
            prompt.replace(pos, placeholder.size(), value);
            pos += value.size();
        }
    };
    replace_all("{num_edits}", std::to_string(request.num_edits));
    replace_all("{question}", request.current_question);
    replace_all("{history}", history_text);
    return prompt;
}

}  // namespace editflip

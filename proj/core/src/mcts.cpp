#include "editflip/mcts.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "editflip/errors.hpp"
#include "editflip/quality.hpp"

namespace editflip {

double uct(std::size_t parent_visits, std::size_t child_visits, double child_value,
           double exploration_c) {
    if (child_visits == 0) {
        return std::numeric_limits<double>::infinity();
    }
    const double n = static_cast<double>(child_visits);
    const double exploit = child_value / n;
    const double explore =
        exploration_c * std::sqrt(std::log(static_cast<double>(parent_visits) + 1.0) / n);
    return exploit + explore;
}

void SearchParams::validate() const {
    if (max_iterations < 1) {
        throw ConfigError("max_iterations must be at least 1");
    }
    if (max_depth < 1) {
        throw ConfigError("max_depth must be at least 1");
    }
    if (branching < 1) {
        throw ConfigError("branching must be at least 1");
    }
    if (exploration_c < 0.0) {
        throw ConfigError("exploration_c must be non-negative");
    }
    if (reward_sign != 1 && reward_sign != -1) {
        throw ConfigError("reward_sign must be +1 or -1");
    }
    if (expansion_attempt_budget < 1) {
        throw ConfigError("expansion_attempt_budget must be at least 1");
    }
}

JsonlTraceSink::JsonlTraceSink(std::ostream& out) : out_(out) {}

void JsonlTraceSink::record(const TraceEvent& event) {
    nlohmann::json obj;
    obj["event"] = event.event;
    obj["node_id"] = event.node_id;
    if (event.parent_id) {
        obj["parent_id"] = *event.parent_id;
    }
    obj["depth"] = event.depth;
    if (event.edit) {
        obj["edit"] = {{"prev", event.edit->prev}, {"new", event.edit->next}};
    }
    if (event.visits) {
        obj["N"] = *event.visits;
    }
    if (event.value) {
        obj["V"] = *event.value;
    }
    if (event.reward) {
        obj["r"] = *event.reward;
    }
    if (event.margin) {
        obj["margin"] = *event.margin;
    }
    if (event.predicted) {
        obj["predicted"] = *event.predicted;
    }
    out_ << obj.dump() << '\n';
}

SearchTree::SearchTree(std::string root_question) {
    SearchNode root;
    root.node_id = 0;
    root.depth = 0;
    root.question = std::move(root_question);
    nodes_.push_back(std::move(root));
}

std::size_t SearchTree::add_child(std::size_t parent_id, EditPair edit, std::string question) {
    SearchNode child;
    child.node_id = nodes_.size();
    child.parent_id = parent_id;
    child.depth = nodes_[parent_id].depth + 1;
    child.question = std::move(question);
    child.incoming_edit = std::move(edit);
    nodes_.push_back(std::move(child));
    nodes_[parent_id].children.push_back(nodes_.back().node_id);
    return nodes_.back().node_id;
}

bool SearchTree::selectable(const SearchNode& n, const SearchParams& params) const {
    if (n.visits == 0) {
        return true;
    }
    return static_cast<int>(n.children.size()) < params.branching && !n.expansion_exhausted &&
           n.depth < params.max_depth;
}

bool SearchTree::has_selectable(const SearchParams& params) const {
    for (const SearchNode& n : nodes_) {
        if (selectable(n, params)) {
            return true;
        }
    }
    return false;
}

std::size_t SearchTree::select(const SearchParams& params) const {
    std::size_t current = 0;
    while (true) {
        const SearchNode& n = nodes_[current];
        if (selectable(n, params)) {
            return current;
        }
        if (n.children.empty()) {
            return current;  // dead leaf; caller revisits with the cached reward
        }
        std::size_t best = n.children.front();
        double best_uct = -std::numeric_limits<double>::infinity();
        for (std::size_t child_id : n.children) {
            const SearchNode& child = nodes_[child_id];
            const double score = uct(n.visits, child.visits, child.value, params.exploration_c);
            if (score > best_uct) {
                best_uct = score;
                best = child_id;
            }
        }
        current = best;
    }
}

void SearchTree::backprop(std::size_t node_id, double reward_value) {
    std::optional<std::size_t> current = node_id;
    while (current) {
        SearchNode& n = nodes_[*current];
        n.visits += 1;
        n.value += reward_value;
        current = n.parent_id;
    }
}

std::vector<EditPair> SearchTree::path_edits(std::size_t node_id) const {
    std::vector<EditPair> path;
    std::size_t current = node_id;
    while (nodes_[current].parent_id) {
        path.push_back(*nodes_[current].incoming_edit);
        current = *nodes_[current].parent_id;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

namespace {

void emit(TraceSink* trace, TraceEvent event) {
    if (trace != nullptr) {
        trace->record(std::move(event));
    }
}

TraceEvent node_event(const char* type, const SearchNode& n) {
    TraceEvent event;
    event.event = type;
    event.node_id = n.node_id;
    event.parent_id = n.parent_id;
    event.depth = n.depth;
    event.edit = n.incoming_edit;
    return event;
}

struct EvalOutcome {
    bool success = false;
};

/// Scores node_id if it has no report yet (a fresh child), otherwise reuses
/// its cached reward (a revisited dead leaf), then backpropagates to the
/// root. Scoring failures propagate before any tree mutation, so a failed
/// evaluation leaves N/V untouched everywhere.
EvalOutcome evaluate_and_backprop(SearchTree& tree, std::size_t node_id, ScorerBackend& scorer,
                                  const McqInstance& instance, const SearchParams& params,
                                  TraceSink* trace, AttackDebug* debug) {
    const bool fresh = !tree.node(node_id).report.has_value();
    if (fresh) {
        ScoreReport report = score_options(scorer, instance, tree.node(node_id).question);
        SearchNode& n = tree.node(node_id);
        n.report = std::move(report);
        n.cached_reward = reward(*n.report, params.reward_sign);
        TraceEvent scored = node_event("scored", n);
        scored.margin = n.report->margin;
        scored.predicted = n.report->predicted_index;
        scored.reward = n.cached_reward;
        emit(trace, std::move(scored));
        if (debug != nullptr) {
            debug->evaluations += 1;
        }
    } else if (debug != nullptr) {
        debug->revisits += 1;
    }

    const double r = tree.node(node_id).cached_reward;
    tree.backprop(node_id, r);
    if (debug != nullptr) {
        debug->backprop_rewards.push_back(r);
    }
    const SearchNode& n = tree.node(node_id);
    TraceEvent bp = node_event("backprop", n);
    bp.visits = n.visits;
    bp.value = n.value;
    bp.reward = r;
    emit(trace, std::move(bp));

    EvalOutcome out;
    out.success = fresh && is_attack_success(*n.report);
    if (out.success) {
        TraceEvent success = node_event("success", n);
        success.margin = n.report->margin;
        success.predicted = n.report->predicted_index;
        emit(trace, std::move(success));
    }
    return out;
}

/// One generator call against node_id: accepted proposals enter the shared
/// history, applicable ones become children. Returns created child ids.
/// Burns one expansion attempt; marks the node exhausted once the budget is
/// spent without filling all child slots.
std::vector<std::size_t> expand_node(SearchTree& tree, std::size_t node_id,
                                     EditGeneratorBackend& generator, EditHistory& history,
                                     const McqInstance& instance, const SearchParams& params,
                                     AttackRecord& record, TraceSink* trace) {
    std::vector<std::size_t> created;
    const std::string question = tree.node(node_id).question;

    EditProposalRequest request;
    request.current_question = question;
    request.history = &history;
    request.num_edits = params.branching - static_cast<int>(tree.node(node_id).children.size());
    request.instance_id = instance.id;

    record.proposal_stats.generator_calls += 1;
    try {
        ProposalBatch batch = propose_edits(generator, request);
        record.proposal_stats.proposed += batch.parsed;
        record.proposal_stats.invalid += batch.invalid;
        record.proposal_stats.duplicates += batch.duplicates;
        for (EditPair& edit : batch.edits) {
            history.insert(edit);
            if (language_confusion_flag(edit)) {
                record.language_confusion_flags += 1;
            }
            EditApplication application = apply_edit(question, edit);
            if (!application.ok()) {
                record.proposal_stats.inapplicable += 1;
                continue;
            }
            const std::size_t child_id =
                tree.add_child(node_id, std::move(edit), std::move(application.text));
            record.proposal_stats.accepted += 1;
            emit(trace, node_event("created", tree.node(child_id)));
            created.push_back(child_id);
        }
    } catch (const ProposalParseError&) {
        record.proposal_stats.parse_failures += 1;
    }

    SearchNode& n = tree.node(node_id);
    n.expansion_attempts += 1;
    if (static_cast<int>(n.children.size()) < params.branching &&
        n.expansion_attempts >= params.expansion_attempt_budget) {
        n.expansion_exhausted = true;
        emit(trace, node_event("exhausted", n));
    }
    return created;
}

AttackRecord run_attack_impl(const McqInstance& instance, EditGeneratorBackend& generator,
                             ScorerBackend& scorer, const SearchParams& params, TraceSink* trace,
                             AttackDebug* debug) {
    params.validate();
    validate_instance(instance);

    AttackRecord record;
    record.instance_id = instance.id;
    record.original_question = instance.question;
    record.final_question = instance.question;

    SearchTree tree(instance.question);
    EditHistory history;
    const auto started = std::chrono::steady_clock::now();

    try {
        emit(trace, node_event("created", tree.root()));

        // Pre-screen: instances the model already gets wrong are excluded
        // from the attack, with zero generator calls.
        {
            ScoreReport root_report = score_options(scorer, instance, instance.question);
            SearchNode& root = tree.root();
            root.report = std::move(root_report);
            root.cached_reward = reward(*root.report, params.reward_sign);
            record.root_report = root.report;
            record.root_margin = root.report->margin;

            TraceEvent scored = node_event("scored", root);
            scored.margin = root.report->margin;
            scored.predicted = root.report->predicted_index;
            scored.reward = root.cached_reward;
            emit(trace, std::move(scored));

            if (is_attack_success(*root.report)) {
                record.skipped_pre_misclassified = true;
                record.outcome = "skipped";
                record.elapsed_ms = std::chrono::duration<double, std::milli>(
                                        std::chrono::steady_clock::now() - started)
                                        .count();
                record.nodes_created = tree.size();
                if (debug != nullptr) {
                    debug->final_nodes = tree.nodes();
                }
                return record;
            }

            tree.backprop(0, root.cached_reward);
            if (debug != nullptr) {
                debug->evaluations += 1;
                debug->backprop_rewards.push_back(root.cached_reward);
            }
            TraceEvent bp = node_event("backprop", tree.root());
            bp.visits = tree.root().visits;
            bp.value = tree.root().value;
            bp.reward = tree.root().cached_reward;
            emit(trace, std::move(bp));
        }

        std::optional<std::size_t> success_node;
        std::string outcome = "budget";
        int iterations = 0;
        while (iterations < params.max_iterations) {
            if (!tree.has_selectable(params)) {
                outcome = "exhausted";
                break;
            }
            iterations += 1;
            const std::size_t selected = tree.select(params);

            if (tree.node(selected).visits == 0) {
                // A child created but never scored (cannot happen with eager
                // evaluation, kept for contract completeness).
                if (evaluate_and_backprop(tree, selected, scorer, instance, params, trace, debug)
                        .success) {
                    success_node = selected;
                    break;
                }
                continue;
            }

            if (tree.selectable(tree.node(selected), params)) {
                const std::vector<std::size_t> created = expand_node(
                    tree, selected, generator, history, instance, params, record, trace);
                bool flipped = false;
                for (const std::size_t child_id : created) {
                    if (evaluate_and_backprop(tree, child_id, scorer, instance, params, trace,
                                              debug)
                            .success) {
                        success_node = child_id;
                        flipped = true;
                        break;
                    }
                }
                if (flipped) {
                    break;
                }
                continue;
            }

            // Scored, unexpandable, childless: revisit with the cached
            // reward so the path statistics keep moving.
            evaluate_and_backprop(tree, selected, scorer, instance, params, trace, debug);
        }

        record.iterations_used = iterations;
        if (success_node) {
            const SearchNode& n = tree.node(*success_node);
            record.success = true;
            record.outcome = "success";
            record.depth_of_success = n.depth;
            record.edit_path = tree.path_edits(*success_node);
            record.final_question = n.question;
            record.final_report = n.report;
            // The recorded path must reproduce the flipping question on its
            // own; a mismatch means the tree bookkeeping is broken.
            const std::string replayed =
                edit_path_replay(record.original_question, record.edit_path);
            if (replayed != record.final_question) {
                throw Error("internal replay mismatch for instance \"" + instance.id + "\"");
            }
        } else {
            record.outcome = outcome;
        }
    } catch (const Error& e) {
        record.success = false;
        record.errored = true;
        record.error = e.what();
        record.outcome = "error";
    }

    record.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
            .count();
    record.nodes_created = tree.size();
    if (debug != nullptr) {
        debug->final_nodes = tree.nodes();
    }
    return record;
}

}  // namespace

AttackRecord run_attack(const McqInstance& instance, EditGeneratorBackend& generator,
                        ScorerBackend& scorer, const SearchParams& params, TraceSink* trace,
                        AttackDebug* debug) {
    return run_attack_impl(instance, generator, scorer, params, trace, debug);
}

AttackRecord run_attack_depth1(const McqInstance& instance, EditGeneratorBackend& generator,
                               ScorerBackend& scorer, const SearchParams& params, TraceSink* trace,
                               AttackDebug* debug) {
    SearchParams depth1 = params;
    depth1.max_depth = 1;
    return run_attack_impl(instance, generator, scorer, depth1, trace, debug);
}

}  // namespace editflip

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "editflip/edits.hpp"
#include "editflip/gateway.hpp"
#include "editflip/mcq.hpp"
#include "editflip/scoring.hpp"

namespace editflip {

/// Upper confidence bound for trees: V/N + c * sqrt(ln(N_parent + 1) / N).
/// Unvisited children (child_visits == 0) get +infinity so they are always
/// tried before any revisit.
double uct(std::size_t parent_visits, std::size_t child_visits, double child_value,
           double exploration_c);

struct SearchParams {
    int max_iterations = 80;
    int max_depth = 8;
    double exploration_c = 1.4;
    int branching = 3;
    int reward_sign = -1;
    int expansion_attempt_budget = 3;  // generator calls per node before giving up

    /// Throws ConfigError unless: max_iterations >= 1, max_depth >= 1,
    /// branching >= 1, exploration_c >= 0, reward_sign in {-1, +1},
    /// expansion_attempt_budget >= 1.
    void validate() const;
};

struct SearchNode {
    std::size_t node_id = 0;
    std::optional<std::size_t> parent_id;
    int depth = 0;
    std::string question;
    std::optional<EditPair> incoming_edit;
    std::size_t visits = 0;  // N
    double value = 0.0;      // V
    std::vector<std::size_t> children;
    std::optional<ScoreReport> report;
    double cached_reward = 0.0;  // reward from the node's own evaluation
    int expansion_attempts = 0;
    bool expansion_exhausted = false;
};

struct ProposalStats {
    std::size_t generator_calls = 0;
    std::size_t proposed = 0;        // pairs extracted from generator output
    std::size_t accepted = 0;        // pairs that became children
    std::size_t invalid = 0;         // empty prev or prev == new text
    std::size_t duplicates = 0;      // already in the attack history
    std::size_t inapplicable = 0;    // valid pair whose prev is absent (or empties the question)
    std::size_t parse_failures = 0;  // responses with no extractable pair
};

/// Outcome of one attack on one instance. Extra context fields beyond the
/// core result (original_question, root_report, nodes_created, timings) make
/// records self-contained for reporting and replay.
struct AttackRecord {
    std::string instance_id;
    bool success = false;
    bool skipped_pre_misclassified = false;
    bool errored = false;
    std::string error;    // cause, only when errored
    std::string outcome;  // "success" | "exhausted" | "budget" | "skipped" | "error"
    std::string original_question;
    std::string final_question;  // flipping variant on success, else the original
    std::vector<EditPair> edit_path;
    std::optional<int> depth_of_success;
    int iterations_used = 0;
    double root_margin = 0.0;
    std::optional<ScoreReport> root_report;
    std::optional<ScoreReport> final_report;
    ProposalStats proposal_stats;
    std::size_t language_confusion_flags = 0;  // accepted proposals whose new text tripped the non-Latin flag
    std::size_t nodes_created = 0;
    double elapsed_ms = 0.0;
};

struct TraceEvent {
    std::string event;  // created | scored | backprop | success | exhausted
    std::size_t node_id = 0;
    std::optional<std::size_t> parent_id;
    int depth = 0;
    std::optional<EditPair> edit;
    std::optional<std::size_t> visits;  // N after the update
    std::optional<double> value;        // V after the update
    std::optional<double> reward;       // r applied by this backprop pass
    std::optional<double> margin;
    std::optional<int> predicted;
};

class TraceSink {
public:
    virtual ~TraceSink() = default;
    virtual void record(const TraceEvent& event) = 0;
};

/// Writes one JSON object per event. The stream must outlive the sink.
class JsonlTraceSink : public TraceSink {
public:
    explicit JsonlTraceSink(std::ostream& out);
    void record(const TraceEvent& event) override;

private:
    std::ostream& out_;
};

class MemoryTraceSink : public TraceSink {
public:
    void record(const TraceEvent& event) override { events_.push_back(event); }
    const std::vector<TraceEvent>& events() const { return events_; }

private:
    std::vector<TraceEvent> events_;
};

/// The attack tree. Nodes live in a flat arena indexed by node_id (creation
/// order, root == 0); one tree belongs to exactly one attack and is never
/// shared across threads.
class SearchTree {
public:
    explicit SearchTree(std::string root_question);

    SearchNode& node(std::size_t id) { return nodes_[id]; }
    const SearchNode& node(std::size_t id) const { return nodes_[id]; }
    SearchNode& root() { return nodes_[0]; }
    const SearchNode& root() const { return nodes_[0]; }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<SearchNode>& nodes() const { return nodes_; }

    std::size_t add_child(std::size_t parent_id, EditPair edit, std::string question);

    /// A node the search can do something with: never evaluated, or still
    /// openable for expansion (spare child slots, budget left, above the
    /// depth limit).
    bool selectable(const SearchNode& n, const SearchParams& params) const;
    bool has_selectable(const SearchParams& params) const;

    /// Walks the UCT-greedy path from the root and returns the first
    /// selectable node; at fully-expanded nodes it descends into the child
    /// maximizing uct() (ties to the lowest index). May return an
    /// already-scored dead leaf; callers revisit those by re-backpropagating
    /// the cached reward. Check has_selectable first to detect exhaustion.
    std::size_t select(const SearchParams& params) const;

    /// N += 1 and V += reward on every node from node_id up to the root.
    void backprop(std::size_t node_id, double reward_value);

    /// Edits along root -> node_id, in application order.
    std::vector<EditPair> path_edits(std::size_t node_id) const;

private:
    std::vector<SearchNode> nodes_;
};

/// Optional instrumentation filled by run_attack for tests: final tree
/// snapshot plus the reward of every backprop pass in order.
struct AttackDebug {
    std::vector<SearchNode> final_nodes;
    std::vector<double> backprop_rewards;
    std::size_t evaluations = 0;
    std::size_t revisits = 0;
};

/// One full attack on one instance: score the root (pre-screen), then up to
/// max_iterations of select / expand / evaluate / backpropagate, stopping
/// early on the first flip or when the tree is exhausted. Backend and
/// scorer failures produce a record marked errored instead of throwing;
/// invalid params or instances still throw.
AttackRecord run_attack(const McqInstance& instance, EditGeneratorBackend& generator,
                        ScorerBackend& scorer, const SearchParams& params,
                        TraceSink* trace = nullptr, AttackDebug* debug = nullptr);

/// Ablation mode: identical, with max_depth forced to 1.
AttackRecord run_attack_depth1(const McqInstance& instance, EditGeneratorBackend& generator,
                               ScorerBackend& scorer, const SearchParams& params,
                               TraceSink* trace = nullptr, AttackDebug* debug = nullptr);

}  // namespace editflip

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gprl/random.hpp"

namespace gprl {

enum class Op : std::uint8_t {
    Const, // float terminal
    True,
    False,
    Var,
    Tanh,
    Abs,
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
    Gt,
    Lt,
    If,
};

enum class ValueType : std::uint8_t { Float, Bool };

struct OpInfo {
    std::string_view name;
    int arity;
    ValueType result;
    std::array<ValueType, 3> args;
};

[[nodiscard]] OpInfo const& op_info(Op op) noexcept;

inline int arity(Op op) noexcept { return op_info(op).arity; }
inline bool is_terminal(Op op) noexcept { return arity(op) == 0; }
inline bool is_constant(Op op) noexcept { return op == Op::Const || op == Op::True || op == Op::False; }

struct Node {
    Op op = Op::Const;
    std::uint32_t var = 0;
    double value = 0.0;

    static Node constant(double v) noexcept { return {Op::Const, 0, v}; }
    static Node boolean(bool b) noexcept { return {b ? Op::True : Op::False, 0, 0.0}; }
    static Node variable(std::uint32_t index) noexcept { return {Op::Var, index, 0.0}; }
    static Node function(Op op) noexcept { return {op, 0, 0.0}; }

    friend bool operator==(Node const&, Node const&) = default;
};

/// Node weights for the interpretability measure. Comparisons count like the basic operators.
struct ComplexityWeights {
    int variable = 1;
    int terminal = 1;
    int basic = 1; // + - *
    int division = 2;
    int logical = 4; // and, or
    int unary = 4;   // tanh, abs
    int conditional = 5;
    int comparison = 1; // > <

    [[nodiscard]] int of(Op op) const noexcept;
};

struct TreeLimits {
    int max_depth = 5;
    std::size_t max_genes = 100;
    int max_complexity = 100;
};

/// Strongly-typed expression tree stored as a prefix-ordered node array.
/// The subtree rooted at index i occupies [i, subtree_end(i)).
class Tree {
public:
    Tree() = default;

    /// Validates arity and child types; throws UsageError on malformed input.
    explicit Tree(std::vector<Node> prefix);

    [[nodiscard]] std::span<Node const> nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] bool empty() const noexcept { return nodes_.empty(); }
    [[nodiscard]] ValueType type() const noexcept;
    [[nodiscard]] ValueType type_at(std::size_t i) const noexcept { return op_info(nodes_[i].op).result; }

    [[nodiscard]] std::size_t subtree_end(std::size_t i) const noexcept;
    [[nodiscard]] Tree subtree(std::size_t i) const;
    /// Depth of the whole tree; a single node has depth 0.
    [[nodiscard]] int depth() const noexcept;
    /// Minimum state length needed to evaluate (largest variable index + 1).
    [[nodiscard]] std::size_t required_inputs() const noexcept { return required_inputs_; }

    /// Float-valued evaluation. Bool-rooted trees evaluate to 1.0 / 0.0.
    /// Throws InputShapeError if `state` is shorter than required_inputs().
    [[nodiscard]] double eval(std::span<double const> state) const;

    /// Copy with the subtree at `at` replaced by `donor`'s subtree at `donor_at`.
    [[nodiscard]] Tree splice(std::size_t at, Tree const& donor, std::size_t donor_at) const;

    /// Copy with every float constant passed through `f`.
    template <typename F>
    [[nodiscard]] Tree map_constants(F&& f) const
    {
        Tree out = *this;
        for (auto& n : out.nodes_) {
            if (n.op == Op::Const) {
                n.value = f(n.value);
            }
        }
        return out;
    }

    [[nodiscard]] std::size_t count_constants() const noexcept;

    friend bool operator==(Tree const& a, Tree const& b) { return a.nodes_ == b.nodes_; }

private:
    std::vector<Node> nodes_;
    std::size_t required_inputs_ = 0;
};

/// Value the protected division returns for |denominator| < kDivisionEpsilon.
inline constexpr double kDivisionEpsilon = 1e-8;
inline constexpr double kProtectedQuotient = 1.0;

[[nodiscard]] double apply_unary(Op op, double a) noexcept;
[[nodiscard]] double apply_binary(Op op, double a, double b) noexcept;

[[nodiscard]] inline double eval_tree(Tree const& tree, std::span<double const> state) { return tree.eval(state); }

[[nodiscard]] int complexity_of(Tree const& tree, ComplexityWeights const& weights = {});

[[nodiscard]] bool within_limits(Tree const& tree, TreeLimits const& limits, ComplexityWeights const& weights = {});

/// Folds every variable-free subtree into a single terminal and resolves
/// conditionals whose condition is constant. Evaluation is unchanged.
[[nodiscard]] Tree auto_cancel(Tree const& tree);

struct GrowSpec {
    std::size_t num_variables = 1;
    double const_low = -20.0;
    double const_high = 20.0;
};

/// Grow initialization: draws a depth in [d_min, d_max]; one randomly chosen child of
/// every function node is grown to full remaining depth, the others to a random
/// depth in [0, d - 1].
[[nodiscard]] Tree grow(Rng& rng, int d_min, int d_max, ValueType want, GrowSpec const& spec);

/// Infix text. Binary operators are parenthesized except at the root; constants use
/// round-trip precision. `names[i]` replaces `x<i>` when provided.
[[nodiscard]] std::string format_tree(Tree const& tree, std::span<std::string const> names = {});

/// Inverse of format_tree. Accepts `x<i>` plus any name in `names`.
/// Throws ParseError (syntax) or TypeError (signature violation, wrong root type).
[[nodiscard]] Tree parse_tree(std::string_view text, std::span<std::string const> names = {},
                              ValueType want = ValueType::Float);

/// One tree per action dimension; outputs are clamped to [low, high].
struct Policy {
    std::vector<Tree> trees;
    std::vector<double> low;
    std::vector<double> high;

    [[nodiscard]] std::size_t action_dim() const noexcept { return trees.size(); }

    /// Writes the clamped action. Throws InputShapeError on size mismatch.
    void act(std::span<double const> state, std::span<double> action) const;

    friend bool operator==(Policy const&, Policy const&) = default;
};

[[nodiscard]] int complexity_of(Policy const& policy, ComplexityWeights const& weights = {});

/// Policy text file: a `# variables: a b c` header, then one expression per line.
[[nodiscard]] std::string format_policy(Policy const& policy, std::span<std::string const> names);

struct PolicyText {
    std::vector<std::string> names;
    std::vector<Tree> trees;
};

[[nodiscard]] PolicyText parse_policy(std::string_view text);

} // namespace gprl

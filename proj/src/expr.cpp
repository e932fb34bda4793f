#include "gprl/expr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "gprl/error.hpp"

namespace gprl {

namespace {

constexpr auto F = ValueType::Float;
constexpr auto B = ValueType::Bool;

// Indexed by Op.
constexpr std::array<OpInfo, 15> kOps{{
    {"const", 0, F, {F, F, F}},
    {"true", 0, B, {F, F, F}},
    {"false", 0, B, {F, F, F}},
    {"var", 0, F, {F, F, F}},
    {"tanh", 1, F, {F, F, F}},
    {"abs", 1, F, {F, F, F}},
    {"+", 2, F, {F, F, F}},
    {"-", 2, F, {F, F, F}},
    {"*", 2, F, {F, F, F}},
    {"/", 2, F, {F, F, F}},
    {"and", 2, B, {B, B, F}},
    {"or", 2, B, {B, B, F}},
    {">", 2, B, {F, F, F}},
    {"<", 2, B, {F, F, F}},
    {"if", 3, F, {B, F, F}},
}};

constexpr double kMaxMagnitude = std::numeric_limits<double>::max();

// Keeps every intermediate finite: overflow saturates instead of producing inf.
inline double saturate(double x) noexcept
{
    if (std::abs(x) <= kMaxMagnitude) {
        return x;
    }
    return x > 0.0 ? kMaxMagnitude : -kMaxMagnitude;
}

struct Evaluator {
    Node const* nodes;
    double const* state;
    std::size_t pos = 0;

    double real()
    {
        Node const& n = nodes[pos++];
        switch (n.op) {
        case Op::Const: return n.value;
        case Op::Var: return state[n.var];
        case Op::Tanh:
        case Op::Abs: return apply_unary(n.op, real());
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            double const a = real();
            double const b = real();
            return apply_binary(n.op, a, b);
        }
        case Op::If: {
            bool const c = boolean();
            double const a = real();
            double const b = real();
            return c ? a : b;
        }
        default: break;
        }
        // Bool node in float position cannot pass Tree validation.
        --pos;
        return boolean() ? 1.0 : 0.0;
    }

    bool boolean()
    {
        Node const& n = nodes[pos++];
        switch (n.op) {
        case Op::True: return true;
        case Op::False: return false;
        case Op::And: {
            bool const a = boolean();
            bool const b = boolean();
            return a && b;
        }
        case Op::Or: {
            bool const a = boolean();
            bool const b = boolean();
            return a || b;
        }
        case Op::Gt: {
            double const a = real();
            double const b = real();
            return a > b;
        }
        case Op::Lt: {
            double const a = real();
            double const b = real();
            return a < b;
        }
        default: break;
        }
        --pos;
        return real() != 0.0;
    }
};

} // namespace

OpInfo const& op_info(Op op) noexcept { return kOps[static_cast<std::size_t>(op)]; }

int ComplexityWeights::of(Op op) const noexcept
{
    switch (op) {
    case Op::Var: return variable;
    case Op::Const:
    case Op::True:
    case Op::False: return terminal;
    case Op::Add:
    case Op::Sub:
    case Op::Mul: return basic;
    case Op::Div: return division;
    case Op::And:
    case Op::Or: return logical;
    case Op::Tanh:
    case Op::Abs: return unary;
    case Op::If: return conditional;
    case Op::Gt:
    case Op::Lt: return comparison;
    }
    return 0;
}

double apply_unary(Op op, double a) noexcept
{
    switch (op) {
    case Op::Tanh: return std::tanh(a);
    case Op::Abs: return std::abs(a);
    default: return a;
    }
}

double apply_binary(Op op, double a, double b) noexcept
{
    switch (op) {
    case Op::Add: return saturate(a + b);
    case Op::Sub: return saturate(a - b);
    case Op::Mul: return saturate(a * b);
    case Op::Div: return std::abs(b) < kDivisionEpsilon ? kProtectedQuotient : saturate(a / b);
    default: return 0.0;
    }
}

Tree::Tree(std::vector<Node> prefix) : nodes_(std::move(prefix))
{
    if (nodes_.empty()) {
        return;
    }
    // Stack of expected child types still to be filled.
    std::vector<ValueType> expected{type()};
    std::size_t required = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (expected.empty()) {
            throw UsageError("tree has trailing nodes after a complete expression");
        }
        Node const& n = nodes_[i];
        if (static_cast<std::size_t>(n.op) >= kOps.size()) {
            throw UsageError("unknown op code");
        }
        auto const& info = op_info(n.op);
        if (info.result != expected.back()) {
            throw UsageError("node " + std::to_string(i) + " (" + std::string(info.name) + ") has the wrong type");
        }
        expected.pop_back();
        for (int c = info.arity - 1; c >= 0; --c) {
            expected.push_back(info.args[static_cast<std::size_t>(c)]);
        }
        if (n.op == Op::Var) {
            required = std::max<std::size_t>(required, std::size_t{n.var} + 1);
        }
    }
    if (!expected.empty()) {
        throw UsageError("tree is missing children");
    }
    required_inputs_ = required;
}

ValueType Tree::type() const noexcept { return nodes_.empty() ? ValueType::Float : type_at(0); }

std::size_t Tree::subtree_end(std::size_t i) const noexcept
{
    int need = 1;
    while (need > 0) {
        need += arity(nodes_[i].op) - 1;
        ++i;
    }
    return i;
}

Tree Tree::subtree(std::size_t i) const
{
    auto const end = subtree_end(i);
    return Tree(std::vector<Node>(nodes_.begin() + static_cast<std::ptrdiff_t>(i),
                                  nodes_.begin() + static_cast<std::ptrdiff_t>(end)));
}

int Tree::depth() const noexcept
{
    // Prefix walk with a stack of remaining-children counters.
    int best = 0;
    std::vector<int> open;
    for (auto const& n : nodes_) {
        int const d = static_cast<int>(open.size());
        best = std::max(best, d);
        if (!open.empty()) {
            --open.back();
        }
        if (arity(n.op) > 0) {
            open.push_back(arity(n.op));
        }
        while (!open.empty() && open.back() == 0) {
            open.pop_back();
        }
    }
    return best;
}

double Tree::eval(std::span<double const> state) const
{
    if (state.size() < required_inputs_) {
        throw InputShapeError("tree reads variable x" + std::to_string(required_inputs_ - 1) + " but state has "
                              + std::to_string(state.size()) + " entries");
    }
    if (nodes_.empty()) {
        return 0.0;
    }
    Evaluator ev{nodes_.data(), state.data()};
    return ev.real();
}

Tree Tree::splice(std::size_t at, Tree const& donor, std::size_t donor_at) const
{
    auto const end = subtree_end(at);
    auto const donor_end = donor.subtree_end(donor_at);
    std::vector<Node> out;
    out.reserve(size() - (end - at) + (donor_end - donor_at));
    out.insert(out.end(), nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(at));
    out.insert(out.end(), donor.nodes_.begin() + static_cast<std::ptrdiff_t>(donor_at),
               donor.nodes_.begin() + static_cast<std::ptrdiff_t>(donor_end));
    out.insert(out.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(end), nodes_.end());
    return Tree(std::move(out));
}

std::size_t Tree::count_constants() const noexcept
{
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(),
                                                  [](Node const& n) { return n.op == Op::Const; }));
}

int complexity_of(Tree const& tree, ComplexityWeights const& weights)
{
    int total = 0;
    for (auto const& n : tree.nodes()) {
        total += weights.of(n.op);
    }
    return total;
}

bool within_limits(Tree const& tree, TreeLimits const& limits, ComplexityWeights const& weights)
{
    return tree.size() <= limits.max_genes && tree.depth() <= limits.max_depth
        && complexity_of(tree, weights) <= limits.max_complexity;
}

namespace {

// Appends the canceled form of in[i...] to out; returns the index after the subtree.
std::size_t cancel_into(std::span<Node const> in, std::size_t i, std::vector<Node>& out)
{
    Node const& n = in[i];
    int const k = arity(n.op);
    if (k == 0) {
        out.push_back(n);
        return i + 1;
    }
    std::size_t const start = out.size();
    out.push_back(n);
    std::array<std::size_t, 4> child_at{};
    std::size_t next = i + 1;
    for (int c = 0; c < k; ++c) {
        child_at[static_cast<std::size_t>(c)] = out.size();
        next = cancel_into(in, next, out);
    }
    child_at[static_cast<std::size_t>(k)] = out.size();

    auto child_is_const = [&](int c) {
        auto const at = child_at[static_cast<std::size_t>(c)];
        return child_at[static_cast<std::size_t>(c) + 1] - at == 1 && is_constant(out[at].op);
    };
    bool all_const = true;
    for (int c = 0; c < k; ++c) {
        all_const = all_const && child_is_const(c);
    }

    if (all_const) {
        Tree const folded(std::vector<Node>(out.begin() + static_cast<std::ptrdiff_t>(start), out.end()));
        double const v = folded.eval({});
        out.resize(start);
        out.push_back(op_info(n.op).result == ValueType::Bool ? Node::boolean(v != 0.0) : Node::constant(v));
    } else if (n.op == Op::If && child_is_const(0)) {
        int const keep = out[child_at[0]].op == Op::True ? 1 : 2;
        std::vector<Node> branch(out.begin() + static_cast<std::ptrdiff_t>(child_at[static_cast<std::size_t>(keep)]),
                                 out.begin() + static_cast<std::ptrdiff_t>(child_at[static_cast<std::size_t>(keep) + 1]));
        out.resize(start);
        out.insert(out.end(), branch.begin(), branch.end());
    }
    return next;
}

// Node pools for the grow method.
constexpr std::array kFloatFunctions{Op::Tanh, Op::Abs, Op::Add, Op::Sub, Op::Mul, Op::Div, Op::If};
constexpr std::array kBoolFunctions{Op::And, Op::Or, Op::Gt, Op::Lt};

void select_next_gene(Rng& rng, int d, ValueType want, GrowSpec const& spec, std::vector<Node>& out)
{
    if (d < 1) {
        if (want == ValueType::Bool) {
            out.push_back(Node::boolean(uniform_index(rng, 2) == 0));
            return;
        }
        // Terminal set: every state variable plus one "random float" entry.
        auto const pick = uniform_index(rng, spec.num_variables + 1);
        if (pick < spec.num_variables) {
            out.push_back(Node::variable(static_cast<std::uint32_t>(pick)));
        } else {
            out.push_back(Node::constant(uniform(rng, spec.const_low, spec.const_high)));
        }
        return;
    }
    Op const op = want == ValueType::Bool ? kBoolFunctions[uniform_index(rng, kBoolFunctions.size())]
                                          : kFloatFunctions[uniform_index(rng, kFloatFunctions.size())];
    auto const& info = op_info(op);
    out.push_back(Node::function(op));
    auto const deep = uniform_index(rng, static_cast<std::size_t>(info.arity));
    for (std::size_t c = 0; c < static_cast<std::size_t>(info.arity); ++c) {
        int const child_depth = c == deep ? d - 1 : static_cast<int>(uniform_index(rng, static_cast<std::size_t>(d)));
        select_next_gene(rng, child_depth, info.args[c], spec, out);
    }
}

} // namespace

Tree auto_cancel(Tree const& tree)
{
    if (tree.empty()) {
        return tree;
    }
    std::vector<Node> out;
    out.reserve(tree.size());
    cancel_into(tree.nodes(), 0, out);
    return Tree(std::move(out));
}

Tree grow(Rng& rng, int d_min, int d_max, ValueType want, GrowSpec const& spec)
{
    if (d_min < 0 || d_max < d_min) {
        throw UsageError("grow: need 0 <= d_min <= d_max");
    }
    if (want == ValueType::Float && spec.num_variables == 0 && !(spec.const_high > spec.const_low)) {
        throw UsageError("grow: empty float terminal set");
    }
    int const d = d_min + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(d_max - d_min + 1)));
    std::vector<Node> out;
    select_next_gene(rng, d, want, spec, out);
    return Tree(std::move(out));
}

void Policy::act(std::span<double const> state, std::span<double> action) const
{
    if (action.size() != trees.size() || low.size() != trees.size() || high.size() != trees.size()) {
        throw InputShapeError("policy has " + std::to_string(trees.size()) + " outputs, action buffer has "
                              + std::to_string(action.size()));
    }
    for (std::size_t i = 0; i < trees.size(); ++i) {
        action[i] = std::clamp(trees[i].eval(state), low[i], high[i]);
    }
}

int complexity_of(Policy const& policy, ComplexityWeights const& weights)
{
    int total = 0;
    for (auto const& t : policy.trees) {
        total += complexity_of(t, weights);
    }
    return total;
}

} // namespace gprl

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <memory>
#include <sstream>

#include "gprl/error.hpp"
#include "gprl/expr.hpp"

namespace gprl {

namespace {

std::string format_number(double v)
{
    std::array<char, 32> buf{};
    std::snprintf(buf.data(), buf.size(), "%.17g", v);
    std::string s(buf.data());
    // Keep float literals visually distinct from variable indices.
    if (s.find_first_of(".eEn") == std::string::npos) {
        s += ".0";
    }
    return s;
}

std::size_t emit(Tree const& tree, std::size_t i, std::span<std::string const> names, bool root, std::string& out)
{
    Node const& n = tree.nodes()[i];
    switch (n.op) {
    case Op::Const: out += format_number(n.value); return i + 1;
    case Op::True: out += "true"; return i + 1;
    case Op::False: out += "false"; return i + 1;
    case Op::Var:
        out += n.var < names.size() ? names[n.var] : "x" + std::to_string(n.var);
        return i + 1;
    case Op::Tanh:
    case Op::Abs: {
        out += op_info(n.op).name;
        out += '(';
        auto const next = emit(tree, i + 1, names, true, out);
        out += ')';
        return next;
    }
    case Op::If: {
        out += "if(";
        auto next = emit(tree, i + 1, names, true, out);
        out += ", ";
        next = emit(tree, next, names, true, out);
        out += ", ";
        next = emit(tree, next, names, true, out);
        out += ')';
        return next;
    }
    default: break;
    }
    if (!root) {
        out += '(';
    }
    auto next = emit(tree, i + 1, names, false, out);
    out += ' ';
    out += op_info(n.op).name;
    out += ' ';
    next = emit(tree, next, names, false, out);
    if (!root) {
        out += ')';
    }
    return next;
}

// Parsed expression before flattening to prefix order.
struct Ast {
    Node node;
    std::size_t position = 0;
    std::vector<std::unique_ptr<Ast>> children;

    [[nodiscard]] ValueType type() const { return op_info(node.op).result; }

    void flatten(std::vector<Node>& out) const
    {
        out.push_back(node);
        for (auto const& c : children) {
            c->flatten(out);
        }
    }
};

using AstPtr = std::unique_ptr<Ast>;

class Parser {
public:
    Parser(std::string_view text, std::span<std::string const> names) : text_(text), names_(names) {}

    AstPtr parse()
    {
        auto root = parse_or();
        skip_ws();
        if (pos_ != text_.size()) {
            throw ParseError("unexpected '" + std::string(1, text_[pos_]) + "'", pos_);
        }
        return root;
    }

private:
    std::string_view text_;
    std::span<std::string const> names_;
    std::size_t pos_ = 0;

    void skip_ws()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])) != 0) {
            ++pos_;
        }
    }

    bool peek_char(char c)
    {
        skip_ws();
        return pos_ < text_.size() && text_[pos_] == c;
    }

    void expect(char c)
    {
        if (!peek_char(c)) {
            throw ParseError(std::string("expected '") + c + "'", pos_);
        }
        ++pos_;
    }

    static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

    bool peek_word(std::string_view word)
    {
        skip_ws();
        if (text_.substr(pos_, word.size()) != word) {
            return false;
        }
        auto const after = pos_ + word.size();
        return after >= text_.size() || !ident_char(text_[after]);
    }

    static AstPtr make(Op op, std::size_t position, std::vector<AstPtr> children)
    {
        auto const& info = op_info(op);
        for (std::size_t c = 0; c < children.size(); ++c) {
            if (children[c]->type() != info.args[c]) {
                auto const want = info.args[c] == ValueType::Bool ? "bool" : "float";
                throw TypeError("operator '" + std::string(info.name) + "' expects a " + want + " operand "
                                    + std::to_string(c + 1),
                                position);
            }
        }
        auto n = std::make_unique<Ast>();
        n->node = Node::function(op);
        n->position = position;
        n->children = std::move(children);
        return n;
    }

    AstPtr binary(Op op, std::size_t at, AstPtr lhs, AstPtr rhs)
    {
        std::vector<AstPtr> kids;
        kids.push_back(std::move(lhs));
        kids.push_back(std::move(rhs));
        return make(op, at, std::move(kids));
    }

    AstPtr parse_or()
    {
        auto lhs = parse_and();
        while (peek_word("or")) {
            auto const at = pos_;
            pos_ += 2;
            lhs = binary(Op::Or, at, std::move(lhs), parse_and());
        }
        return lhs;
    }

    AstPtr parse_and()
    {
        auto lhs = parse_cmp();
        while (peek_word("and")) {
            auto const at = pos_;
            pos_ += 3;
            lhs = binary(Op::And, at, std::move(lhs), parse_cmp());
        }
        return lhs;
    }

    AstPtr parse_cmp()
    {
        auto lhs = parse_add();
        if (peek_char('>') || peek_char('<')) {
            auto const at = pos_;
            Op const op = text_[pos_] == '>' ? Op::Gt : Op::Lt;
            ++pos_;
            lhs = binary(op, at, std::move(lhs), parse_add());
        }
        return lhs;
    }

    AstPtr parse_add()
    {
        auto lhs = parse_mul();
        while (peek_char('+') || peek_char('-')) {
            auto const at = pos_;
            Op const op = text_[pos_] == '+' ? Op::Add : Op::Sub;
            ++pos_;
            lhs = binary(op, at, std::move(lhs), parse_mul());
        }
        return lhs;
    }

    AstPtr parse_mul()
    {
        auto lhs = parse_primary();
        while (peek_char('*') || peek_char('/')) {
            auto const at = pos_;
            Op const op = text_[pos_] == '*' ? Op::Mul : Op::Div;
            ++pos_;
            lhs = binary(op, at, std::move(lhs), parse_primary());
        }
        return lhs;
    }

    AstPtr leaf(Node node, std::size_t at)
    {
        auto n = std::make_unique<Ast>();
        n->node = node;
        n->position = at;
        return n;
    }

    AstPtr parse_number()
    {
        auto const at = pos_;
        double v = 0.0;
        auto const* first = text_.data() + pos_;
        auto const* last = text_.data() + text_.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc{} || ptr == first) {
            throw ParseError("malformed number", at);
        }
        pos_ += static_cast<std::size_t>(ptr - first);
        return leaf(Node::constant(v), at);
    }

    AstPtr parse_primary()
    {
        skip_ws();
        if (pos_ >= text_.size()) {
            throw ParseError("unexpected end of expression", pos_);
        }
        auto const at = pos_;
        char const c = text_[pos_];
        if (c == '(') {
            ++pos_;
            auto inner = parse_or();
            expect(')');
            return inner;
        }
        if (c == '-' || c == '.' || std::isdigit(static_cast<unsigned char>(c)) != 0) {
            if (c == '-' && (pos_ + 1 >= text_.size()
                             || (std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) == 0 && text_[pos_ + 1] != '.'))) {
                throw ParseError("unary minus is only allowed on numeric literals", at);
            }
            return parse_number();
        }
        if (!ident_char(c)) {
            throw ParseError("unexpected '" + std::string(1, c) + "'", at);
        }
        auto end = pos_;
        while (end < text_.size() && ident_char(text_[end])) {
            ++end;
        }
        std::string const word(text_.substr(pos_, end - pos_));
        pos_ = end;

        if (word == "true" || word == "false") {
            return leaf(Node::boolean(word == "true"), at);
        }
        if (word == "tanh" || word == "abs" || word == "if") {
            Op const op = word == "tanh" ? Op::Tanh : word == "abs" ? Op::Abs : Op::If;
            expect('(');
            std::vector<AstPtr> args;
            args.push_back(parse_or());
            for (int k = 1; k < op_info(op).arity; ++k) {
                expect(',');
                args.push_back(parse_or());
            }
            expect(')');
            return make(op, at, std::move(args));
        }
        auto const named = std::find(names_.begin(), names_.end(), word);
        if (named != names_.end()) {
            return leaf(Node::variable(static_cast<std::uint32_t>(named - names_.begin())), at);
        }
        if (word.size() > 1 && word[0] == 'x'
            && std::all_of(word.begin() + 1, word.end(), [](char d) { return std::isdigit(static_cast<unsigned char>(d)) != 0; })) {
            std::uint32_t index = 0;
            auto [ptr, ec] = std::from_chars(word.data() + 1, word.data() + word.size(), index);
            if (ec != std::errc{}) {
                throw ParseError("variable index out of range", at);
            }
            return leaf(Node::variable(index), at);
        }
        throw ParseError("unknown identifier '" + word + "'", at);
    }
};

std::string trim(std::string_view s)
{
    auto const b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    auto const e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

std::string format_tree(Tree const& tree, std::span<std::string const> names)
{
    std::string out;
    if (!tree.empty()) {
        emit(tree, 0, names, true, out);
    }
    return out;
}

Tree parse_tree(std::string_view text, std::span<std::string const> names, ValueType want)
{
    Parser parser(text, names);
    auto ast = parser.parse();
    if (ast->type() != want) {
        throw TypeError(std::string("expression is ") + (ast->type() == ValueType::Bool ? "bool" : "float")
                            + "-valued, expected " + (want == ValueType::Bool ? "bool" : "float"),
                        0);
    }
    std::vector<Node> prefix;
    ast->flatten(prefix);
    return Tree(std::move(prefix));
}

std::string format_policy(Policy const& policy, std::span<std::string const> names)
{
    std::string out = "# variables:";
    for (auto const& n : names) {
        out += ' ';
        out += n;
    }
    out += '\n';
    for (auto const& t : policy.trees) {
        out += format_tree(t, names);
        out += '\n';
    }
    return out;
}

PolicyText parse_policy(std::string_view text)
{
    PolicyText result;
    std::istringstream in{std::string(text)};
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        auto const body = trim(line);
        if (body.empty()) {
            continue;
        }
        if (body.front() == '#') {
            constexpr std::string_view kTag = "# variables:";
            if (!header_seen && body.rfind(kTag, 0) == 0) {
                std::istringstream names(body.substr(kTag.size()));
                std::string name;
                while (names >> name) {
                    result.names.push_back(name);
                }
                header_seen = true;
            }
            continue;
        }
        result.trees.push_back(parse_tree(body, result.names));
    }
    if (!header_seen) {
        throw ParseError("policy file lacks a '# variables:' header", 0);
    }
    return result;
}

} // namespace gprl

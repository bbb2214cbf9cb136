#include "rbsde/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "rbsde/error.hpp"

namespace rbsde {

struct Expression::Node {
    enum class Kind { Number, Variable, Unary, Binary, Call } kind = Kind::Number;
    double number = 0.0;
    std::string name;  // variable, operator or function
    std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

class Parser {
public:
    explicit Parser(const std::string& text) : s_(text) {}

    NodePtr parse() {
        NodePtr n = comparison();
        skip();
        if (pos_ != s_.size()) error("unexpected '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;

    [[noreturn]] void error(const std::string& what) const {
        fail(ErrorCode::ConfigError, "expression \"" + s_ + "\" at position " + std::to_string(pos_) + ": " + what);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool take(const std::string& token) {
        skip();
        if (s_.compare(pos_, token.size(), token) == 0) {
            pos_ += token.size();
            return true;
        }
        return false;
    }

    static NodePtr make(Kind kind, std::string name, std::vector<NodePtr> args, double number = 0.0) {
        auto n = std::make_shared<Expression::Node>();
        n->kind = kind;
        n->name = std::move(name);
        n->args = std::move(args);
        n->number = number;
        return n;
    }

    NodePtr comparison() {
        NodePtr lhs = additive();
        for (const char* op : {"<=", ">=", "==", "!=", "<", ">"}) {
            if (take(op)) return make(Kind::Binary, op, {lhs, additive()});
        }
        return lhs;
    }

    NodePtr additive() {
        NodePtr lhs = multiplicative();
        while (true) {
            if (take("+")) lhs = make(Kind::Binary, "+", {lhs, multiplicative()});
            else if (take("-")) lhs = make(Kind::Binary, "-", {lhs, multiplicative()});
            else return lhs;
        }
    }

    NodePtr multiplicative() {
        NodePtr lhs = unary();
        while (true) {
            if (take("*")) lhs = make(Kind::Binary, "*", {lhs, unary()});
            else if (take("/")) lhs = make(Kind::Binary, "/", {lhs, unary()});
            else return lhs;
        }
    }

    NodePtr unary() {
        if (take("-")) return make(Kind::Unary, "-", {unary()});
        if (take("+")) return unary();
        return power();
    }

    NodePtr power() {
        NodePtr base = primary();
        if (take("^")) return make(Kind::Binary, "^", {base, unary()});
        return base;
    }

    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) error("unexpected end");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr inner = comparison();
            if (!take(")")) error("expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) error("bad number");
            pos_ += static_cast<std::size_t>(end - begin);
            return make(Kind::Number, {}, {}, v);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            std::string name = s_.substr(start, pos_ - start);
            if (take("(")) {
                std::vector<NodePtr> args;
                if (!take(")")) {
                    do args.push_back(comparison());
                    while (take(","));
                    if (!take(")")) error("expected ')' after arguments");
                }
                static const std::vector<std::string> known{"max", "min", "abs", "exp", "log", "sqrt"};
                bool ok = false;
                for (const auto& k : known) ok = ok || k == name;
                if (!ok) error("unknown function " + name);
                const bool variadic = name == "max" || name == "min";
                if (variadic ? args.empty() : args.size() != 1) error("wrong argument count for " + name);
                return make(Kind::Call, name, std::move(args));
            }
            return make(Kind::Variable, std::move(name), {});
        }
        error("unexpected '" + std::string(1, c) + "'");
    }
};

double eval(const Expression::Node& n, const std::map<std::string, double>& vars) {
    switch (n.kind) {
        case Kind::Number: return n.number;
        case Kind::Variable: {
            const auto it = vars.find(n.name);
            if (it == vars.end()) fail(ErrorCode::ConfigError, "unknown variable " + n.name);
            return it->second;
        }
        case Kind::Unary: return -eval(*n.args[0], vars);
        case Kind::Binary: {
            const double a = eval(*n.args[0], vars);
            const double b = eval(*n.args[1], vars);
            const std::string& op = n.name;
            if (op == "+") return a + b;
            if (op == "-") return a - b;
            if (op == "*") return a * b;
            if (op == "/") return a / b;
            if (op == "^") return std::pow(a, b);
            if (op == "<") return a < b;
            if (op == "<=") return a <= b;
            if (op == ">") return a > b;
            if (op == ">=") return a >= b;
            if (op == "==") return a == b;
            return a != b;
        }
        case Kind::Call: {
            if (n.name == "max" || n.name == "min") {
                double v = eval(*n.args[0], vars);
                for (std::size_t k = 1; k < n.args.size(); ++k) {
                    const double w = eval(*n.args[k], vars);
                    v = n.name == "max" ? std::max(v, w) : std::min(v, w);
                }
                return v;
            }
            const double x = eval(*n.args[0], vars);
            if (n.name == "abs") return std::abs(x);
            if (n.name == "exp") return std::exp(x);
            if (n.name == "log") return std::log(x);
            return std::sqrt(x);
        }
    }
    return 0.0;
}

}  // namespace

Expression Expression::parse(const std::string& text) {
    Expression e;
    e.text_ = text;
    e.root_ = Parser(text).parse();
    return e;
}

double Expression::evaluate(const std::map<std::string, double>& vars) const {
    if (!root_) fail(ErrorCode::ConfigError, "empty expression");
    return eval(*root_, vars);
}

}  // namespace rbsde

#pragma once

#include <map>
#include <memory>
#include <string>

namespace rbsde {

/// Arithmetic expression over named variables. Grammar: numbers, variables,
/// + - * / ^, unary minus, comparisons (< <= > >= == !=, yielding 0 or 1),
/// parentheses and the functions max, min, abs, exp, log, sqrt.
class Expression {
public:
    Expression() = default;
    /// Throws ConfigError on a syntax error.
    static Expression parse(const std::string& text);

    /// Throws ConfigError for a variable missing from `vars`.
    double evaluate(const std::map<std::string, double>& vars) const;

    const std::string& text() const noexcept { return text_; }

    struct Node;

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
};

}  // namespace rbsde

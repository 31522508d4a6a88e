#pragma once

// Tiny arithmetic expression language: exactly the grammar the PLUMED
// emitter produces, used to verify emitted FUNC strings against the
// in-process CV values.
//
//   expr    := term (('+' | '-') term)*
//   term    := factor (('*' | '/') factor)*
//   factor  := '-' factor | primary
//   primary := number | 'v' digits | 'exp' '(' expr ')' | '(' expr ')'

#include <cctype>
#include <charconv>
#include <memory>
#include <string>
#include <vector>

#include "mlcv/common.hpp"

namespace mlcv {

struct ExprNode;
using ExprPtr = std::unique_ptr<ExprNode>;

struct ExprNode {
    enum class Op { Constant, Variable, Add, Sub, Mul, Div, Neg, Exp };
    Op op;
    double constant = 0.0;
    std::size_t variable = 0;   // zero-based index of v<k>
    ExprPtr lhs, rhs;

    static ExprPtr make_const(double v) {
        auto n = std::make_unique<ExprNode>();
        n->op = Op::Constant;
        n->constant = v;
        return n;
    }
    static ExprPtr make_var(std::size_t idx) {
        auto n = std::make_unique<ExprNode>();
        n->op = Op::Variable;
        n->variable = idx;
        return n;
    }
    static ExprPtr make(Op op, ExprPtr a, ExprPtr b = nullptr) {
        auto n = std::make_unique<ExprNode>();
        n->op = op;
        n->lhs = std::move(a);
        n->rhs = std::move(b);
        return n;
    }
};

inline double eval_expression(const ExprNode& n, std::span<const double> vars) {
    switch (n.op) {
        case ExprNode::Op::Constant: return n.constant;
        case ExprNode::Op::Variable:
            if (n.variable >= vars.size())
                throw InvalidInputError("expression references v" + std::to_string(n.variable + 1) +
                                        " but only " + std::to_string(vars.size()) +
                                        " variables were supplied");
            return vars[n.variable];
        case ExprNode::Op::Add: return eval_expression(*n.lhs, vars) + eval_expression(*n.rhs, vars);
        case ExprNode::Op::Sub: return eval_expression(*n.lhs, vars) - eval_expression(*n.rhs, vars);
        case ExprNode::Op::Mul: return eval_expression(*n.lhs, vars) * eval_expression(*n.rhs, vars);
        case ExprNode::Op::Div: return eval_expression(*n.lhs, vars) / eval_expression(*n.rhs, vars);
        case ExprNode::Op::Neg: return -eval_expression(*n.lhs, vars);
        case ExprNode::Op::Exp: return std::exp(eval_expression(*n.lhs, vars));
    }
    throw InvalidInputError("expression: bad node");
}

class ExpressionParser {
public:
    explicit ExpressionParser(std::string_view text) : text_(text) {}

    ExprPtr parse() {
        ExprPtr e = parse_expr();
        skip_ws();
        if (pos_ != text_.size()) fail("trailing characters");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("expression parse error at position " + std::to_string(pos_) + ": " +
                         what);
    }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    ExprPtr parse_expr() {
        ExprPtr lhs = parse_term();
        for (;;) {
            if (eat('+'))
                lhs = ExprNode::make(ExprNode::Op::Add, std::move(lhs), parse_term());
            else if (eat('-'))
                lhs = ExprNode::make(ExprNode::Op::Sub, std::move(lhs), parse_term());
            else
                return lhs;
        }
    }

    ExprPtr parse_term() {
        ExprPtr lhs = parse_factor();
        for (;;) {
            if (eat('*'))
                lhs = ExprNode::make(ExprNode::Op::Mul, std::move(lhs), parse_factor());
            else if (eat('/'))
                lhs = ExprNode::make(ExprNode::Op::Div, std::move(lhs), parse_factor());
            else
                return lhs;
        }
    }

    ExprPtr parse_factor() {
        if (eat('-')) return ExprNode::make(ExprNode::Op::Neg, parse_factor());
        return parse_primary();
    }

    ExprPtr parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            ExprPtr e = parse_expr();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        if (text_.compare(pos_, 4, "exp(") == 0) {
            pos_ += 4;
            ExprPtr e = parse_expr();
            if (!eat(')')) fail("expected ')' after exp argument");
            return ExprNode::make(ExprNode::Op::Exp, std::move(e));
        }
        if (c == 'v') {
            std::size_t p = pos_ + 1;
            std::size_t idx = 0;
            bool any = false;
            while (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
                idx = idx * 10 + static_cast<std::size_t>(text_[p] - '0');
                ++p;
                any = true;
            }
            if (!any || idx == 0) fail("bad variable name (expected v1, v2, ...)");
            pos_ = p;
            return ExprNode::make_var(idx - 1);
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            double value = 0.0;
            const char* begin = text_.data() + pos_;
            const char* end = text_.data() + text_.size();
            auto [ptr, ec] = std::from_chars(begin, end, value);
            if (ec != std::errc{}) fail("bad number");
            pos_ = static_cast<std::size_t>(ptr - text_.data());
            return ExprNode::make_const(value);
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

inline ExprPtr parse_expression(std::string_view text) { return ExpressionParser(text).parse(); }

inline double eval_expression(std::string_view text, std::span<const double> vars) {
    return eval_expression(*parse_expression(text), vars);
}

}  // namespace mlcv

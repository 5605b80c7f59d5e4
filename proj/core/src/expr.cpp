#include "geobeam/expr.hpp"

#include <cctype>
#include <cmath>

namespace geobeam {

struct Expr::Node {
    enum Kind { number, variable, unary_minus, add, sub, mul, div, pow, call } kind = number;
    cplx value{0, 0};
    int var = 0; // 1..3 coordinates, 4 r, 5 theta
    std::string fn;
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse_all()
    {
        auto n = expression();
        skip();
        if (p_ != s_.size())
            fail("unexpected '" + std::string(1, s_[p_]) + "'");
        return n;
    }
    int max_coord = 0;

private:
    const std::string& s_;
    std::size_t p_ = 0;

    [[noreturn]] void fail(const std::string& what) const
    {
        throw ConfigurationError("expression '" + s_ + "' at column " + std::to_string(p_ + 1) + ": " + what);
    }
    void skip()
    {
        while (p_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[p_])))
            ++p_;
    }
    bool eat(char c)
    {
        skip();
        if (p_ < s_.size() && s_[p_] == c) {
            ++p_;
            return true;
        }
        return false;
    }
    static NodePtr make(Expr::Node::Kind k, NodePtr a, NodePtr b = nullptr)
    {
        auto n = std::make_shared<Expr::Node>();
        n->kind = k;
        n->a = std::move(a);
        n->b = std::move(b);
        return n;
    }

    NodePtr expression()
    {
        auto n = term();
        for (;;) {
            if (eat('+'))
                n = make(Expr::Node::add, n, term());
            else if (eat('-'))
                n = make(Expr::Node::sub, n, term());
            else
                return n;
        }
    }
    NodePtr term()
    {
        auto n = unary();
        for (;;) {
            if (eat('*'))
                n = make(Expr::Node::mul, n, unary());
            else if (eat('/'))
                n = make(Expr::Node::div, n, unary());
            else
                return n;
        }
    }
    NodePtr unary()
    {
        if (eat('-'))
            return make(Expr::Node::unary_minus, unary());
        if (eat('+'))
            return unary();
        return power();
    }
    // right associative; -x^2 parses as -(x^2)
    NodePtr power()
    {
        auto base = primary();
        if (eat('^'))
            return make(Expr::Node::pow, base, unary());
        return base;
    }
    NodePtr primary()
    {
        skip();
        if (p_ >= s_.size())
            fail("unexpected end");
        char c = s_[p_];
        if (c == '(') {
            ++p_;
            auto n = expression();
            if (!eat(')'))
                fail("missing ')'");
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + p_;
            char* end = nullptr;
            double v = std::strtod(begin, &end);
            if (end == begin)
                fail("bad number");
            p_ += static_cast<std::size_t>(end - begin);
            auto n = std::make_shared<Expr::Node>();
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t q = p_;
            while (q < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[q])) || s_[q] == '_'))
                ++q;
            std::string id = s_.substr(p_, q - p_);
            p_ = q;
            auto n = std::make_shared<Expr::Node>();
            if (id == "x1" || id == "x2" || id == "x3") {
                n->kind = Expr::Node::variable;
                n->var = id[1] - '0';
                max_coord = std::max(max_coord, n->var);
                return n;
            }
            if (id == "r" || id == "theta") {
                n->kind = Expr::Node::variable;
                n->var = id == "r" ? 4 : 5;
                if (n->var == 5)
                    max_coord = std::max(max_coord, 2);
                return n;
            }
            if (id == "pi") {
                n->value = pi;
                return n;
            }
            if (id == "i") {
                n->value = I;
                return n;
            }
            if (id == "sin" || id == "cos" || id == "exp" || id == "sqrt" || id == "abs" || id == "log") {
                if (!eat('('))
                    fail("expected '(' after " + id);
                n->kind = Expr::Node::call;
                n->fn = id;
                n->a = expression();
                if (!eat(')'))
                    fail("missing ')'");
                return n;
            }
            fail("unknown identifier '" + id + "'");
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }
};

cplx eval(const Expr::Node& n, const Vec& x)
{
    switch (n.kind) {
    case Expr::Node::number:
        return n.value;
    case Expr::Node::variable:
        if (n.var <= 3) {
            if (n.var > x.size())
                throw DomainError("expression uses x" + std::to_string(n.var) + " on a " +
                                  std::to_string(x.size()) + "-dimensional point");
            return x(n.var - 1);
        }
        if (n.var == 4)
            return x.norm();
        if (x.size() < 2)
            throw DomainError("theta needs two coordinates");
        return std::atan2(x(1), x(0));
    case Expr::Node::unary_minus:
        return -eval(*n.a, x);
    case Expr::Node::add:
        return eval(*n.a, x) + eval(*n.b, x);
    case Expr::Node::sub:
        return eval(*n.a, x) - eval(*n.b, x);
    case Expr::Node::mul:
        return eval(*n.a, x) * eval(*n.b, x);
    case Expr::Node::div:
        return eval(*n.a, x) / eval(*n.b, x);
    case Expr::Node::pow: {
        cplx b = eval(*n.a, x), e = eval(*n.b, x);
        if (e.imag() == 0 && e.real() == std::round(e.real()) && std::abs(e.real()) <= 64) {
            int k = static_cast<int>(e.real());
            cplx r = 1;
            for (int j = 0; j < std::abs(k); ++j)
                r *= b;
            return k < 0 ? 1.0 / r : r;
        }
        if (b.imag() == 0 && b.real() >= 0 && e.imag() == 0)
            return std::pow(b.real(), e.real());
        return std::pow(b, e);
    }
    case Expr::Node::call: {
        cplx a = eval(*n.a, x);
        if (n.fn == "sin")
            return std::sin(a);
        if (n.fn == "cos")
            return std::cos(a);
        if (n.fn == "exp")
            return std::exp(a);
        if (n.fn == "sqrt")
            return a.imag() == 0 && a.real() >= 0 ? cplx(std::sqrt(a.real())) : std::sqrt(a);
        if (n.fn == "abs")
            return std::abs(a);
        return std::log(a);
    }
    }
    return 0.0;
}

} // namespace

Expr Expr::parse(const std::string& text)
{
    Parser p(text);
    Expr e;
    e.root_ = p.parse_all();
    e.text_ = text;
    e.max_coord_ = p.max_coord;
    return e;
}

cplx Expr::operator()(const Vec& x) const
{
    return eval(*root_, x);
}

} // namespace geobeam

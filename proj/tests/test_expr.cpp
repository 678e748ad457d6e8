// Copyright 2026 The pirktune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pirktune/codeblock.hpp"
#include "pirktune/expr.hpp"

using namespace pirktune;

TEST(Expr, PrecedenceAndAssociativity) {
  EXPECT_EQ(eval_constant(parse_expr("1 + 2*3")), 7.0);
  EXPECT_EQ(eval_constant(parse_expr("(1 + 2)*3")), 9.0);
  EXPECT_EQ(eval_constant(parse_expr("8 - 3 - 2")), 3.0);
  EXPECT_EQ(eval_constant(parse_expr("8 / 4 / 2")), 1.0);
  EXPECT_EQ(eval_constant(parse_expr("-2*-3")), 6.0);
  EXPECT_EQ(eval_constant(parse_expr("0.1130 - 0.0403 + 0.0258 - 0.0099")), 0.1130 - 0.0403 + 0.0258 - 0.0099);
}

TEST(Expr, Bindings) {
  EXPECT_EQ(eval_constant(parse_expr("(s+1)*n+s"), {{"s", 4}, {"n", 1000}}), 5004.0);
  EXPECT_THROW(eval_constant(parse_expr("n+q"), {{"n", 1}}), ParseError);
}

TEST(Expr, CallsAreWhitelisted) {
  EXPECT_DOUBLE_EQ(eval_constant(parse_expr("exp(1.0)")), std::exp(1.0));
  EXPECT_DOUBLE_EQ(eval_constant(parse_expr("pow(2, 10)")), 1024.0);
  EXPECT_THROW(parse_expr("system(1)"), ParseError);
}

TEST(Expr, SyntaxErrors) {
  EXPECT_THROW(parse_expr("1 +"), ParseError);
  EXPECT_THROW(parse_expr("(1"), ParseError);
  EXPECT_THROW(parse_expr("a[1"), ParseError);
  EXPECT_THROW(parse_statement("1 = x"), ParseError);
}

TEST(Expr, StatementPrintsCompoundAssignment) {
  auto st = parse_statement("dy[j] = dy[j] + b[i] * F[i][j]");
  EXPECT_EQ(to_string(st), "dy[j] += b[i] * F[i][j]");
  auto st2 = parse_statement("y[j] += h*dy[j]");
  EXPECT_EQ(to_string(st2), "y[j] += h * dy[j]");
}

TEST(Expr, PrintParseRoundTrip) {
  std::mt19937_64 rng(7);
  const char* leaves[] = {"x", "y", "2.5", "a[i]", "F[i][j+1]", "exp(x)"};
  const char* ops[] = {"+", "-", "*", "/"};
  std::uniform_int_distribution<int> leaf(0, 5), op(0, 3), depth(0, 3);
  std::function<std::string(int)> gen = [&](int d) -> std::string {
    if (d == 0) return leaves[leaf(rng)];
    return "(" + gen(d - 1) + " " + ops[op(rng)] + " " + gen(depth(rng) % d) + ")";
  };
  for (int i = 0; i < 200; ++i) {
    Expr e = parse_expr(gen(3));
    EXPECT_EQ(parse_expr(to_string(e)), e);
  }
}

TEST(Expr, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    double v = u(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.0625), "0.0625");
  EXPECT_EQ(format_double(1.0), "1.0");
}

TEST(Expr, SimplifyIdentities) {
  EXPECT_EQ(simplify(parse_expr("x*0")), Expr::lit(0));
  EXPECT_EQ(simplify(parse_expr("x*1.0 + 0")), Expr::id("x"));
  EXPECT_EQ(simplify(parse_expr("x/1")), Expr::id("x"));
  EXPECT_EQ(simplify(parse_expr("2*3 + x")), parse_expr("6 + x"));
  EXPECT_EQ(simplify(parse_expr("x*0"), false), parse_expr("x*0"));
}

TEST(Expr, PolynomialForm) {
  auto p = to_poly(parse_expr("(s+1)*n+s"), "n", {{"s", 4}});
  ASSERT_TRUE(p);
  EXPECT_EQ(p->degree(), 1u);
  EXPECT_EQ((*p)(818), 4094.0);
  EXPECT_FALSE(to_poly(parse_expr("exp(n)"), "n"));
}

TEST(CodeBlock, AprxJiStructure) {
  auto b = parse_code_block("%LOOP_START j n\n%LOOP_START i s unroll\n%COMP C1\n%LOOP_END i\n%LOOP_END j\n",
                            BlockContext::kernel);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].kind, CodeNode::Kind::loop);
  EXPECT_EQ(b[0].var, "j");
  EXPECT_EQ(b[0].trips, Expr::id("n"));
  EXPECT_FALSE(b[0].unroll);
  ASSERT_EQ(b[0].body.size(), 1u);
  EXPECT_EQ(b[0].body[0].var, "i");
  EXPECT_TRUE(b[0].body[0].unroll);
  ASSERT_EQ(b[0].body[0].body.size(), 1u);
  EXPECT_EQ(b[0].body[0].body[0].kind, CodeNode::Kind::comp);
  EXPECT_EQ(b[0].body[0].body[0].ref, "C1");
}

TEST(CodeBlock, EmptyTextIsEmptyBlock) { EXPECT_TRUE(parse_code_block("", BlockContext::kernel).empty()); }

TEST(CodeBlock, KeywordsRestrictedByContext) {
  EXPECT_THROW(parse_code_block("%PRAGMA omp simd\n", BlockContext::skeleton), ParseError);
  EXPECT_THROW(parse_code_block("%KERNEL LC\n", BlockContext::kernel), ParseError);
  EXPECT_THROW(parse_code_block("%LOOP_START j n\n%COMP C1\n", BlockContext::kernel), ParseError);
  EXPECT_THROW(parse_code_block("%LOOP_END j\n", BlockContext::kernel), ParseError);
  EXPECT_THROW(parse_code_block("%FOO\n", BlockContext::kernel), ParseError);
}

TEST(CodeBlock, PrintParseRoundTrip) {
  const char* text = "%COM barrier\n%LOOP_START k m+1\n%KERNEL RHS\n%COM barrier\n%LOOP_END k\n%KERNEL UPD\n";
  auto b = parse_code_block(text, BlockContext::skeleton);
  EXPECT_EQ(parse_code_block(to_string(b), BlockContext::skeleton), b);
}

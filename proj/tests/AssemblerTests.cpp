// Copyright 2026 Neverland Simulator Authors
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

#include <catch2/catch_amalgamated.hpp>

#include <neverland/Assembler.hpp>
#include <neverland/Machine.hpp>

using namespace neverland;

TEST_CASE("single halt assembles to one word and halts the machine")
{
  Program p = assemble("halt\n");
  REQUIRE(p.words.size() == 1);
  REQUIRE(p.words[0] == uint32_t(Opcode::Halt));

  Machine m;
  uint64_t pfn = m.config().ramBase >> kPageShift;
  m.mapPage(0, PageEntry{pfn, true, false, true, true});
  m.debugWrite(m.config().ramBase, p.bytes());
  m.setMode(PrivMode::User);
  m.setPc(0);
  REQUIRE(m.step().kind == StepOutcome::Kind::Halted);
}

TEST_CASE("self-referencing branch encodes offset zero")
{
  Program p = assemble("loop: beq r1, r2, loop\n");
  REQUIRE(p.words.size() == 1);
  Instruction i = decode(p.words[0]);
  REQUIRE(i.op == Opcode::Beq);
  REQUIRE(i.imm == 0);
  REQUIRE(p.symbols.at("loop") == 0);
}

TEST_CASE("syscall stub traps with the syscall cause")
{
  Program p = assemble(R"(
    li r1, 7
    ecall
    halt
  )");
  REQUIRE(p.words.size() == 3);

  Machine m;
  uint64_t pfn = m.config().ramBase >> kPageShift;
  m.mapPage(0, PageEntry{pfn, true, false, true, true});
  m.debugWrite(m.config().ramBase, p.bytes());
  m.setMode(PrivMode::User);
  m.setPc(0);

  REQUIRE(m.step().kind == StepOutcome::Kind::Continue);
  StepOutcome out = m.step();
  REQUIRE(out.kind == StepOutcome::Kind::Trapped);
  REQUIRE(out.cause == TrapCause::Syscall);
  REQUIRE(m.reg(1) == 7);
}

TEST_CASE("labels resolve forwards and backwards")
{
  Program p = assemble(R"(
  start:
    jal r0, end
    addi r1, r1, 1
  end:
    bne r1, r0, start
    halt
  )", 0x4000);
  REQUIRE(p.symbols.at("start") == 0x4000);
  REQUIRE(p.symbols.at("end") == 0x4008);

  Instruction jal = decode(p.words[0]);
  REQUIRE(jal.imm == 2);           // two words forward
  Instruction bne = decode(p.words[2]);
  REQUIRE(bne.imm == -2);          // two words back
}

TEST_CASE("external symbols and %hi/%lo composition")
{
  Program p = assemble(R"(
    li r3, %hi(target)
    addi r3, r3, %lo(target)
    halt
  )", 0, {{"target", 0xc000'9b48}});

  Machine m;
  uint64_t pfn = m.config().ramBase >> kPageShift;
  m.mapPage(0, PageEntry{pfn, true, false, true, true});
  m.debugWrite(m.config().ramBase, p.bytes());
  m.setMode(PrivMode::User);
  m.setPc(0);
  m.run(10);
  REQUIRE(m.reg(3) == 0xc000'9b48);

  // A low half with the sign bit set still composes correctly.
  Program q = assemble("li r3, %hi(t)\naddi r3, r3, %lo(t)\nhalt\n",
                       0, {{"t", 0xc000'fff8}});
  Machine n;
  n.mapPage(0, PageEntry{pfn, true, false, true, true});
  n.debugWrite(n.config().ramBase, q.bytes());
  n.setMode(PrivMode::User);
  n.setPc(0);
  n.run(10);
  REQUIRE(n.reg(3) == 0xc000'fff8);
}

TEST_CASE("li accepts shifted immediates and rejects the rest")
{
  REQUIRE(decode(assemble("li r1, 0x8000\n").words[0]).imm == 0x8000);
  REQUIRE_NOTHROW(assemble("li r1, 0xffff0000\n"));
  REQUIRE_NOTHROW(assemble("li r1, 0xc000000000000000\n"));

  REQUIRE_THROWS_AS(assemble("li r1, 0x12345\n"), AsmError);
  REQUIRE_THROWS_AS(assemble("li r1, -1\n"), AsmError);
}

TEST_CASE("diagnostics carry line numbers")
{
  try
    {
      assemble("halt\nfrobnicate r1\n");
      FAIL("expected AsmError");
    }
  catch (const AsmError& e)
    {
      REQUIRE(e.line() == 2);
      REQUIRE(std::string(e.what()).find("frobnicate") != std::string::npos);
    }

  try
    {
      assemble("beq r1, r2, nowhere\n");
      FAIL("expected AsmError");
    }
  catch (const AsmError& e)
    {
      REQUIRE(e.line() == 1);
      REQUIRE(std::string(e.what()).find("nowhere") != std::string::npos);
    }

  REQUIRE_THROWS_AS(assemble("dup: halt\ndup: halt\n"), AsmError);
  REQUIRE_THROWS_AS(assemble("addi r1, r2, 99999\n"), AsmError);
  REQUIRE_THROWS_AS(assemble("add r1, r2\n"), AsmError);
}

TEST_CASE(".word emits raw data")
{
  Program p = assemble(".word 0xdeadbeef\n.word 7\n");
  REQUIRE(p.words == std::vector<uint32_t>{0xdead'beef, 7});
}

TEST_CASE("comments and blank lines are ignored")
{
  Program p = assemble(R"(
    # leading comment
    halt          ; trailing comment

    ignored_label:
  )");
  REQUIRE(p.words.size() == 1);
  REQUIRE(p.symbols.count("ignored_label") == 1);
}

TEST_CASE("property: assembly round-trips through the disassembler")
{
  // One of every instruction form, then: disassemble each word, feed the
  // listing back through the assembler, and require identical encodings.
  Program p = assemble(R"(
    li r1, 0x2000
    li r2, 0xffff000000000000
    add r3, r1, r2
    addi r4, r3, -17
    lw r5, 8(r1)
    sw r5, 16(r1)
    beq r1, r2, 2
    bne r3, r4, -1
    jal r6, 4
    jalr r0, r6, 12
    ecall
    sret
    csrr r7, stvec
    csrw lockctl, r7
    csrr r8, 0x342
    halt
  )");

  std::string listing;
  for (uint32_t w : p.words)
    listing += disassemble(w) + "\n";

  Program q = assemble(listing);
  REQUIRE(q.words == p.words);
}

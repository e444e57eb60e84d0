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

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "Isa.hpp"

namespace neverland
{

  /// Assembly diagnostic carrying the 1-based source line.
  class AsmError : public std::runtime_error
  {
  public:
    AsmError(size_t line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message),
        line_(line)
    { }

    size_t line() const { return line_; }

  private:
    size_t line_;
  };

  /// An assembled program: encoded instruction words plus the symbol table
  /// of every label, resolved against the load base address.
  struct Program
  {
    uint64_t base = 0;
    std::vector<uint32_t> words;
    std::map<std::string, uint64_t> symbols;

    size_t byteSize() const
    { return words.size() * 4; }

    std::vector<uint8_t> bytes() const
    {
      std::vector<uint8_t> out;
      out.reserve(byteSize());
      for (uint32_t w : words)
        for (unsigned i = 0; i < 4; ++i)
          out.push_back(uint8_t(w >> (8 * i)));
      return out;
    }
  };

  /// Two-pass assembler for the simulator's ISA.
  ///
  /// Syntax: one statement per line, `#` or `;` starts a comment. A line may
  /// carry `label:` prefixes. Operands are comma separated; loads and stores
  /// use `imm(rN)`. `.word V` emits a raw 32-bit word. Branch and jal
  /// targets are labels (or raw word offsets); `%hi(sym)`/`%lo(sym)` split a
  /// symbol for a li/addi pair. External symbols may be pre-seeded.
  class Assembler
  {
  public:

    static Program assemble(std::string_view text, uint64_t base = 0,
                            const std::map<std::string, uint64_t>& externals = {})
    {
      Assembler as(base, externals);
      as.runPass(text, 1);
      as.runPass(text, 2);
      return std::move(as.program_);
    }

  private:

    struct Operand
    {
      enum class Kind { Reg, Imm, Mem, Sym };
      Kind kind = Kind::Imm;
      unsigned reg = 0;       // Reg / Mem base register
      int64_t value = 0;      // Imm / Mem displacement
      std::string sym;        // Sym: unresolved name (resolved in encode)
      bool hi = false;        // Sym with %hi(...)
      bool lo = false;        // Sym with %lo(...)
    };

    Assembler(uint64_t base, const std::map<std::string, uint64_t>& externals)
      : externals_(externals)
    {
      program_.base = base;
    }

    void runPass(std::string_view text, int pass)
    {
      pass_ = pass;
      pc_ = program_.base;
      if (pass == 2)
        program_.words.clear();

      size_t lineNo = 0;
      size_t pos = 0;
      while (pos <= text.size())
        {
          size_t eol = text.find('\n', pos);
          if (eol == std::string_view::npos)
            eol = text.size();
          ++lineNo;
          processLine(text.substr(pos, eol - pos), lineNo);
          pos = eol + 1;
          if (eol == text.size())
            break;
        }
    }

    void processLine(std::string_view line, size_t lineNo)
    {
      if (auto cut = line.find_first_of("#;"); cut != std::string_view::npos)
        line = line.substr(0, cut);
      line = trim(line);

      // Leading labels.
      while (true)
        {
          size_t colon = line.find(':');
          if (colon == std::string_view::npos)
            break;
          std::string_view head = trim(line.substr(0, colon));
          if (head.empty() or not isIdentifier(head))
            throw AsmError(lineNo, "malformed label");
          if (pass_ == 1)
            {
              std::string name(head);
              if (program_.symbols.count(name) or externals_.count(name))
                throw AsmError(lineNo, "duplicate label '" + name + "'");
              program_.symbols[name] = pc_;
            }
          line = trim(line.substr(colon + 1));
        }

      if (line.empty())
        return;

      size_t sp = line.find_first_of(" \t");
      std::string mnem(line.substr(0, sp));
      std::string_view rest = sp == std::string_view::npos ? "" : trim(line.substr(sp));
      std::vector<Operand> ops = parseOperands(rest, lineNo);

      if (mnem == ".word")
        {
          needOps(ops, 1, mnem, lineNo);
          emit(uint32_t(immValue(ops[0], lineNo)));
          return;
        }

      encodeInstruction(mnem, ops, lineNo);
    }

    void encodeInstruction(const std::string& mnem, std::vector<Operand>& ops,
                           size_t lineNo)
    {
      if (mnem == "li")
        {
          needOps(ops, 2, mnem, lineNo);
          uint64_t value = uint64_t(immValue(ops[1], lineNo));
          auto enc = liEncoding(value);
          if (not enc)
            throw AsmError(lineNo, "li immediate not encodable; "
                           "compose with %hi/%lo and addi");
          emit(encodeLi(regOf(ops[0], lineNo), enc->first, enc->second));
        }
      else if (mnem == "add")
        {
          needOps(ops, 3, mnem, lineNo);
          emit(encodeR(Opcode::Add, regOf(ops[0], lineNo), regOf(ops[1], lineNo),
                       regOf(ops[2], lineNo)));
        }
      else if (mnem == "addi")
        {
          needOps(ops, 3, mnem, lineNo);
          emit(encodeI(Opcode::Addi, regOf(ops[0], lineNo), regOf(ops[1], lineNo),
                       imm16Of(ops[2], lineNo)));
        }
      else if (mnem == "lw" or mnem == "sw")
        {
          needOps(ops, 2, mnem, lineNo);
          if (ops[1].kind != Operand::Kind::Mem)
            throw AsmError(lineNo, mnem + " needs an imm(reg) operand");
          emit(encodeI(mnem == "lw" ? Opcode::Lw : Opcode::Sw,
                       regOf(ops[0], lineNo), ops[1].reg,
                       checkedImm16(ops[1].value, lineNo)));
        }
      else if (mnem == "beq" or mnem == "bne")
        {
          needOps(ops, 3, mnem, lineNo);
          emit(encodeI(mnem == "beq" ? Opcode::Beq : Opcode::Bne,
                       regOf(ops[0], lineNo), regOf(ops[1], lineNo),
                       uint16_t(branchOffset(ops[2], lineNo, 16))));
        }
      else if (mnem == "jal")
        {
          needOps(ops, 2, mnem, lineNo);
          emit(encodeJal(regOf(ops[0], lineNo),
                         int32_t(branchOffset(ops[1], lineNo, 20))));
        }
      else if (mnem == "jalr")
        {
          needOps(ops, 3, mnem, lineNo);
          emit(encodeI(Opcode::Jalr, regOf(ops[0], lineNo), regOf(ops[1], lineNo),
                       imm16Of(ops[2], lineNo)));
        }
      else if (mnem == "csrr")
        {
          needOps(ops, 2, mnem, lineNo);
          emit(encodeI(Opcode::Csrr, regOf(ops[0], lineNo), 0, csrOf(ops[1], lineNo)));
        }
      else if (mnem == "csrw")
        {
          needOps(ops, 2, mnem, lineNo);
          emit(encodeI(Opcode::Csrw, 0, regOf(ops[1], lineNo), csrOf(ops[0], lineNo)));
        }
      else if (mnem == "ecall" or mnem == "sret" or mnem == "halt")
        {
          needOps(ops, 0, mnem, lineNo);
          emit(encodeBare(mnem == "ecall" ? Opcode::Ecall
                          : mnem == "sret" ? Opcode::Sret : Opcode::Halt));
        }
      else
        throw AsmError(lineNo, "unknown mnemonic '" + mnem + "'");
    }

    // ----- Operand handling -----

    std::vector<Operand> parseOperands(std::string_view text, size_t lineNo)
    {
      std::vector<Operand> ops;
      size_t pos = 0;
      while (pos < text.size())
        {
          size_t comma = text.find(',', pos);
          // Keep a comma inside %hi(...)/%lo(...) intact (there are none,
          // but a paren-matching split is cheap and future proof).
          std::string_view tok = text.substr(pos, comma == std::string_view::npos
                                             ? std::string_view::npos : comma - pos);
          tok = trim(tok);
          if (tok.empty())
            throw AsmError(lineNo, "empty operand");
          ops.push_back(parseOperand(tok, lineNo));
          if (comma == std::string_view::npos)
            break;
          pos = comma + 1;
        }
      return ops;
    }

    Operand parseOperand(std::string_view tok, size_t lineNo)
    {
      Operand op;

      if (auto r = parseReg(tok))
        {
          op.kind = Operand::Kind::Reg;
          op.reg = *r;
          return op;
        }

      // imm(rN) memory operand
      if (tok.back() == ')')
        {
          size_t open = tok.rfind('(');
          if (open == std::string_view::npos)
            throw AsmError(lineNo, "malformed memory operand");
          auto baseReg = parseReg(trim(tok.substr(open + 1, tok.size() - open - 2)));
          if (not baseReg and tok.substr(0, 3) != "%hi" and tok.substr(0, 3) != "%lo")
            throw AsmError(lineNo, "malformed memory operand");
          if (baseReg)
            {
              std::string_view disp = trim(tok.substr(0, open));
              op.kind = Operand::Kind::Mem;
              op.reg = *baseReg;
              op.value = disp.empty() ? 0 : parseInt(disp, lineNo);
              return op;
            }
        }

      if (tok.starts_with("%hi(") or tok.starts_with("%lo("))
        {
          if (tok.back() != ')')
            throw AsmError(lineNo, "malformed %hi/%lo operand");
          op.kind = Operand::Kind::Sym;
          op.sym = std::string(trim(tok.substr(4, tok.size() - 5)));
          op.hi = tok.starts_with("%hi");
          op.lo = not op.hi;
          return op;
        }

      if (isIdentifier(tok))
        {
          op.kind = Operand::Kind::Sym;
          op.sym = std::string(tok);
          return op;
        }

      op.kind = Operand::Kind::Imm;
      op.value = parseInt(tok, lineNo);
      return op;
    }

    int64_t symbolValue(const std::string& name, size_t lineNo) const
    {
      if (auto it = program_.symbols.find(name); it != program_.symbols.end())
        return int64_t(it->second);
      if (auto it = externals_.find(name); it != externals_.end())
        return int64_t(it->second);
      if (pass_ == 1)
        return 0;   // forward reference; resolved on pass 2
      throw AsmError(lineNo, "undefined label '" + name + "'");
    }

    int64_t immValue(const Operand& op, size_t lineNo) const
    {
      if (op.kind == Operand::Kind::Imm)
        return op.value;
      if (op.kind == Operand::Kind::Sym)
        {
          int64_t v = symbolValue(op.sym, lineNo);
          if (op.hi)
            return (v + 0x8000) & ~int64_t(0xffff);
          if (op.lo)
            return int16_t(v & 0xffff);
          return v;
        }
      throw AsmError(lineNo, "expected an immediate operand");
    }

    unsigned regOf(const Operand& op, size_t lineNo) const
    {
      if (op.kind != Operand::Kind::Reg)
        throw AsmError(lineNo, "expected a register operand");
      return op.reg;
    }

    uint16_t imm16Of(const Operand& op, size_t lineNo) const
    { return checkedImm16(immValue(op, lineNo), lineNo); }

    uint16_t checkedImm16(int64_t v, size_t lineNo) const
    {
      if (pass_ == 2 and (v < -32768 or v > 32767))
        throw AsmError(lineNo, "immediate out of signed 16-bit range");
      return uint16_t(v & 0xffff);
    }

    uint16_t csrOf(const Operand& op, size_t lineNo) const
    {
      if (op.kind == Operand::Kind::Sym and not op.hi and not op.lo)
        {
          if (auto n = csrNumberFromName(op.sym))
            return *n;
          // fall through: maybe a label used as csr number (unsupported)
          throw AsmError(lineNo, "unknown csr '" + op.sym + "'");
        }
      int64_t v = immValue(op, lineNo);
      if (v < 0 or v > 0xfff)
        throw AsmError(lineNo, "csr number out of range");
      return uint16_t(v);
    }

    /// Branch/jal displacement in instruction words relative to this
    /// instruction; a bare number is taken as the raw word offset.
    int64_t branchOffset(const Operand& op, size_t lineNo, unsigned bits)
    {
      int64_t off;
      if (op.kind == Operand::Kind::Sym and not op.hi and not op.lo)
        {
          int64_t target = symbolValue(op.sym, lineNo);
          int64_t delta = target - int64_t(pc_);
          if (delta % 4 != 0)
            throw AsmError(lineNo, "branch target not word aligned");
          off = delta / 4;
        }
      else
        off = immValue(op, lineNo);

      int64_t lim = int64_t(1) << (bits - 1);
      if (pass_ == 2 and (off < -lim or off >= lim))
        throw AsmError(lineNo, "branch target out of range");
      return off;
    }

    void needOps(const std::vector<Operand>& ops, size_t n, const std::string& mnem,
                 size_t lineNo) const
    {
      if (ops.size() != n)
        throw AsmError(lineNo, mnem + " expects " + std::to_string(n) + " operand(s)");
    }

    void emit(uint32_t word)
    {
      if (pass_ == 2)
        program_.words.push_back(word);
      pc_ += 4;
    }

    // ----- Lexing helpers -----

    static std::string_view trim(std::string_view s)
    {
      while (not s.empty() and std::isspace(uint8_t(s.front())))
        s.remove_prefix(1);
      while (not s.empty() and std::isspace(uint8_t(s.back())))
        s.remove_suffix(1);
      return s;
    }

    static bool isIdentifier(std::string_view s)
    {
      if (s.empty() or (not std::isalpha(uint8_t(s[0])) and s[0] != '_'))
        return false;
      for (char c : s)
        if (not std::isalnum(uint8_t(c)) and c != '_' and c != '.')
          return false;
      return true;
    }

    static std::optional<unsigned> parseReg(std::string_view s)
    {
      if (s.size() < 2 or s.size() > 3 or s[0] != 'r')
        return std::nullopt;
      unsigned n = 0;
      for (char c : s.substr(1))
        {
          if (not std::isdigit(uint8_t(c)))
            return std::nullopt;
          n = n * 10 + unsigned(c - '0');
        }
      if (n > 15)
        return std::nullopt;
      return n;
    }

    static int64_t parseInt(std::string_view s, size_t lineNo)
    {
      bool neg = false;
      if (not s.empty() and (s[0] == '-' or s[0] == '+'))
        {
          neg = s[0] == '-';
          s.remove_prefix(1);
        }
      if (s.empty())
        throw AsmError(lineNo, "malformed integer");

      uint64_t value = 0;
      if (s.starts_with("0x") or s.starts_with("0X"))
        {
          s.remove_prefix(2);
          if (s.empty())
            throw AsmError(lineNo, "malformed integer");
          for (char c : s)
            {
              int d = std::isdigit(uint8_t(c)) ? c - '0'
                : (c >= 'a' and c <= 'f') ? c - 'a' + 10
                : (c >= 'A' and c <= 'F') ? c - 'A' + 10 : -1;
              if (d < 0)
                throw AsmError(lineNo, "malformed integer");
              value = value * 16 + uint64_t(d);
            }
        }
      else
        {
          for (char c : s)
            {
              if (not std::isdigit(uint8_t(c)))
                throw AsmError(lineNo, "malformed integer");
              value = value * 10 + uint64_t(c - '0');
            }
        }
      return neg ? -int64_t(value) : int64_t(value);
    }

    Program program_;
    std::map<std::string, uint64_t> externals_;
    int pass_ = 1;
    uint64_t pc_ = 0;
  };

  inline Program assemble(std::string_view text, uint64_t base = 0,
                          const std::map<std::string, uint64_t>& externals = {})
  { return Assembler::assemble(text, base, externals); }

}

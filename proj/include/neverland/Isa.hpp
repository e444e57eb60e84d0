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
#include <optional>
#include <string>
#include <string_view>

namespace neverland
{

  /// The simulated CPU executes a 14-instruction 64-bit ISA with 32-bit
  /// instruction words and sixteen general registers (r0 reads as zero).
  ///
  /// Word layout, little-endian:
  ///   bits [7:0]   opcode
  ///   bits [11:8]  ra  (rd, or rs1 for branches, or the stored reg for sw)
  ///   bits [15:12] rb  (rs1, or rs2 for branches)
  ///   bits [19:16] rc  (rs2, register forms only)
  ///   bits [13:12] sh  (li only: immediate left-shift in 16-bit steps)
  ///   bits [31:16] imm16 (signed except for li, which zero-extends)
  ///   bits [31:12] imm20 (jal only, signed, in instruction words)
  ///
  /// Branch and jal immediates are pc-relative in units of one instruction
  /// word, counted from the branch itself (offset 0 targets the branch).
  enum class Opcode : uint8_t
    {
     Invalid = 0x00,
     Li      = 0x01,   // li rd, imm        rd = zext(imm16) << (16*sh)
     Add     = 0x02,   // add rd, rs1, rs2
     Addi    = 0x03,   // addi rd, rs1, imm
     Lw      = 0x04,   // lw rd, imm(rs1)   64-bit load
     Sw      = 0x05,   // sw rs2, imm(rs1)  64-bit store
     Beq     = 0x06,   // beq rs1, rs2, offset
     Bne     = 0x07,   // bne rs1, rs2, offset
     Jal     = 0x08,   // jal rd, offset
     Jalr    = 0x09,   // jalr rd, rs1, imm
     Ecall   = 0x0a,
     Sret    = 0x0b,
     Csrr    = 0x0c,   // csrr rd, csr
     Csrw    = 0x0d,   // csrw csr, rs1
     Halt    = 0x0e
    };

  /// Control and status register numbers.
  namespace csr
  {
    constexpr uint16_t kStvec = 0x105;    // trap vector
    constexpr uint16_t kSepc = 0x141;     // trap return pc
    constexpr uint16_t kScause = 0x142;   // trap cause
    constexpr uint16_t kSum = 0x180;      // bit0: supervisor user-memory data override
    constexpr uint16_t kLockctl = 0x7c0;  // bit0: lock stvec (sticky until reset)
  }

  constexpr std::optional<uint16_t> csrNumberFromName(std::string_view name)
  {
    if (name == "stvec")   return csr::kStvec;
    if (name == "sepc")    return csr::kSepc;
    if (name == "scause")  return csr::kScause;
    if (name == "sum")     return csr::kSum;
    if (name == "lockctl") return csr::kLockctl;
    return std::nullopt;
  }

  constexpr const char* csrName(uint16_t number)
  {
    switch (number)
      {
      case csr::kStvec:   return "stvec";
      case csr::kSepc:    return "sepc";
      case csr::kScause:  return "scause";
      case csr::kSum:     return "sum";
      case csr::kLockctl: return "lockctl";
      }
    return nullptr;
  }

  /// A decoded instruction word.
  struct Instruction
  {
    Opcode op = Opcode::Invalid;
    unsigned ra = 0;        // bits [11:8]
    unsigned rb = 0;        // bits [15:12]
    unsigned rc = 0;        // bits [19:16]
    unsigned sh = 0;        // li shift field, bits [13:12]
    int32_t imm = 0;        // sign-extended imm16 / imm20; zero-extended for li
    bool valid = false;
  };

  constexpr uint32_t encodeR(Opcode op, unsigned rd, unsigned rs1, unsigned rs2)
  {
    return uint32_t(op) | (rd & 0xf) << 8 | (rs1 & 0xf) << 12 | (rs2 & 0xf) << 16;
  }

  constexpr uint32_t encodeI(Opcode op, unsigned ra, unsigned rb, uint16_t imm16)
  {
    return uint32_t(op) | (ra & 0xf) << 8 | (rb & 0xf) << 12 | uint32_t(imm16) << 16;
  }

  constexpr uint32_t encodeLi(unsigned rd, unsigned sh, uint16_t imm16)
  {
    return uint32_t(Opcode::Li) | (rd & 0xf) << 8 | (sh & 3) << 12 | uint32_t(imm16) << 16;
  }

  constexpr uint32_t encodeJal(unsigned rd, int32_t offsetWords)
  {
    return uint32_t(Opcode::Jal) | (rd & 0xf) << 8 | (uint32_t(offsetWords) & 0xfffff) << 12;
  }

  constexpr uint32_t encodeBare(Opcode op)
  { return uint32_t(op); }

  /// li encodes value iff it equals some imm16 zero-extended and shifted left
  /// by 0, 16, 32 or 48 bits. Returns the (sh, imm16) pair, preferring the
  /// smallest shift.
  constexpr std::optional<std::pair<unsigned, uint16_t>> liEncoding(uint64_t value)
  {
    for (unsigned sh = 0; sh < 4; ++sh)
      {
        uint64_t imm = value >> (16 * sh);
        if (imm <= 0xffff and (imm << (16 * sh)) == value)
          return std::make_pair(sh, uint16_t(imm));
      }
    return std::nullopt;
  }

  constexpr int32_t signExtend16(uint32_t v)
  { return int32_t(int16_t(v & 0xffff)); }

  constexpr int32_t signExtend20(uint32_t v)
  {
    v &= 0xfffff;
    if (v & 0x80000)
      v |= 0xfff00000;
    return int32_t(v);
  }

  constexpr Instruction decode(uint32_t word)
  {
    Instruction inst;
    inst.ra = (word >> 8) & 0xf;
    inst.rb = (word >> 12) & 0xf;
    inst.rc = (word >> 16) & 0xf;
    inst.sh = (word >> 12) & 3;

    uint8_t op = word & 0xff;
    if (op < uint8_t(Opcode::Li) or op > uint8_t(Opcode::Halt))
      return inst;

    inst.op = Opcode(op);
    inst.valid = true;

    switch (inst.op)
      {
      case Opcode::Li:
        inst.imm = int32_t(word >> 16);   // zero-extended payload
        break;
      case Opcode::Jal:
        inst.imm = signExtend20(word >> 12);
        break;
      case Opcode::Add:
      case Opcode::Ecall:
      case Opcode::Sret:
      case Opcode::Halt:
        break;
      default:
        inst.imm = signExtend16(word >> 16);
        break;
      }
    return inst;
  }

  constexpr const char* mnemonic(Opcode op)
  {
    switch (op)
      {
      case Opcode::Li:    return "li";
      case Opcode::Add:   return "add";
      case Opcode::Addi:  return "addi";
      case Opcode::Lw:    return "lw";
      case Opcode::Sw:    return "sw";
      case Opcode::Beq:   return "beq";
      case Opcode::Bne:   return "bne";
      case Opcode::Jal:   return "jal";
      case Opcode::Jalr:  return "jalr";
      case Opcode::Ecall: return "ecall";
      case Opcode::Sret:  return "sret";
      case Opcode::Csrr:  return "csrr";
      case Opcode::Csrw:  return "csrw";
      case Opcode::Halt:  return "halt";
      default:            return "invalid";
      }
  }

  /// Render one instruction word as assembly text. Branch/jal targets are
  /// shown as relative word offsets; csr numbers use their names when known.
  inline std::string disassemble(uint32_t word)
  {
    Instruction i = decode(word);
    if (not i.valid)
      return "invalid";

    auto reg = [](unsigned r) { return "r" + std::to_string(r); };
    auto csrText = [](int32_t n) {
      const char* name = csrName(uint16_t(n));
      return name ? std::string(name) : std::to_string(n);
    };

    switch (i.op)
      {
      case Opcode::Li:
        return "li " + reg(i.ra) + ", "
          + std::to_string(uint64_t(uint32_t(i.imm) & 0xffff) << (16 * i.sh));
      case Opcode::Add:
        return "add " + reg(i.ra) + ", " + reg(i.rb) + ", " + reg(i.rc);
      case Opcode::Addi:
        return "addi " + reg(i.ra) + ", " + reg(i.rb) + ", " + std::to_string(i.imm);
      case Opcode::Lw:
        return "lw " + reg(i.ra) + ", " + std::to_string(i.imm) + "(" + reg(i.rb) + ")";
      case Opcode::Sw:
        return "sw " + reg(i.ra) + ", " + std::to_string(i.imm) + "(" + reg(i.rb) + ")";
      case Opcode::Beq:
        return "beq " + reg(i.ra) + ", " + reg(i.rb) + ", " + std::to_string(i.imm);
      case Opcode::Bne:
        return "bne " + reg(i.ra) + ", " + reg(i.rb) + ", " + std::to_string(i.imm);
      case Opcode::Jal:
        return "jal " + reg(i.ra) + ", " + std::to_string(i.imm);
      case Opcode::Jalr:
        return "jalr " + reg(i.ra) + ", " + reg(i.rb) + ", " + std::to_string(i.imm);
      case Opcode::Ecall: return "ecall";
      case Opcode::Sret:  return "sret";
      case Opcode::Csrr:
        return "csrr " + reg(i.ra) + ", " + csrText(i.imm);
      case Opcode::Csrw:
        return "csrw " + csrText(i.imm) + ", " + reg(i.rb);
      case Opcode::Halt:  return "halt";
      default:            return "invalid";
      }
  }

}

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
#include <stdexcept>
#include <string>
#include <vector>

namespace neverland
{

  /// Kind of memory access presented to the permission table.
  enum class AccessKind : uint8_t { Fetch, Load, Store };

  /// Reason a permission check refused an access. When more than one rule
  /// could refuse, the check reports the highest-priority cause:
  /// WriteProtected > ExecDenied > PrivFetchDenied > PrivDataDenied >
  /// UserAccessToPrivDenied.
  enum class DenyCause : uint8_t
    {
     WriteProtected,
     ExecDenied,
     PrivFetchDenied,
     PrivDataDenied,
     UserAccessToPrivDenied
    };

  constexpr const char* toString(DenyCause c)
  {
    switch (c)
      {
      case DenyCause::WriteProtected:         return "write_protected";
      case DenyCause::ExecDenied:             return "exec_denied";
      case DenyCause::PrivFetchDenied:        return "priv_fetch_denied";
      case DenyCause::PrivDataDenied:         return "priv_data_denied";
      case DenyCause::UserAccessToPrivDenied: return "user_access_to_priv_denied";
      }
    return "?";
  }

  constexpr const char* toString(AccessKind k)
  {
    switch (k)
      {
      case AccessKind::Fetch: return "fetch";
      case AccessKind::Load:  return "load";
      case AccessKind::Store: return "store";
      }
    return "?";
  }

  /// Outcome of a permission check: Allow, or Deny with exactly one cause.
  class AccessVerdict
  {
  public:

    static AccessVerdict allow()
    { return AccessVerdict(true, DenyCause::WriteProtected); }

    static AccessVerdict deny(DenyCause cause)
    { return AccessVerdict(false, cause); }

    bool allowed() const
    { return allowed_; }

    bool denied() const
    { return not allowed_; }

    /// Denial cause. Meaningful only when denied().
    DenyCause cause() const
    { return cause_; }

    bool operator==(const AccessVerdict& other) const
    {
      if (allowed_ != other.allowed_)
        return false;
      return allowed_ or cause_ == other.cause_;
    }

    bool operator!=(const AccessVerdict& other) const
    { return not (*this == other); }

    std::string toString() const
    {
      if (allowed_)
        return "allow";
      return std::string("deny:") + neverland::toString(cause_);
    }

  private:

    AccessVerdict(bool allowed, DenyCause cause)
      : allowed_(allowed), cause_(cause)
    { }

    bool allowed_;
    DenyCause cause_;
  };

  /// One row of the hardware permission table. Ranges are half-open byte
  /// ranges [start, end) of physical addresses; start == end matches no
  /// address. An entry with valid == false matches no address either. Once
  /// locked is set, no field changes until table reset.
  struct PermissionEntry
  {
    uint64_t start = 0;   // inclusive
    uint64_t end = 0;     // exclusive
    bool priv = false;    // supervisor may read/fetch this range
    bool write = false;   // range is writable
    bool exec = false;    // supervisor may fetch code from this range
    bool valid = false;
    bool locked = false;

    bool matches(uint64_t addr) const
    { return valid and start <= addr and addr < end; }

    bool operator==(const PermissionEntry&) const = default;
  };

  /// Permission bits in effect for one physical address after overlap
  /// resolution.
  struct EffectivePerms
  {
    bool priv = false;
    bool write = false;
    bool exec = false;
  };

  /// The hardware physical-memory permission table. Holds a fixed number of
  /// entries (4, 8 or 16), an enforcement arm bit and an enforcement lock
  /// bit. The table is programmed through a 64-bit word MMIO interface; a
  /// locked entry masks the write-enable path of its registers so writes to
  /// it are silently discarded. Only a reset (machine reboot) clears locks.
  class PermissionTable
  {
  public:

    /// MMIO register map, as byte offsets from the window base. Each entry
    /// occupies kEntryStride bytes: +0 start, +8 end, +16 flags, +24
    /// reserved (reads zero, writes ignored). The enforce control word sits
    /// at kEnforceOffset: bit0 arm, bit1 lock. All accesses are 64-bit and
    /// must be 8-byte aligned.
    static constexpr uint64_t kEntryStride = 32;
    static constexpr uint64_t kStartOffset = 0;
    static constexpr uint64_t kEndOffset = 8;
    static constexpr uint64_t kFlagsOffset = 16;
    static constexpr uint64_t kEnforceOffset = 0x1000;
    static constexpr uint64_t kWindowSize = kEnforceOffset + 8;

    /// Flag word bit assignments.
    static constexpr uint64_t kFlagPriv = 1;
    static constexpr uint64_t kFlagWrite = 2;
    static constexpr uint64_t kFlagExec = 4;
    static constexpr uint64_t kFlagValid = 8;
    static constexpr uint64_t kFlagLocked = 16;

    /// Enforce control word bits.
    static constexpr uint64_t kEnforceArm = 1;
    static constexpr uint64_t kEnforceLock = 2;

    /// Construct a table with the given capacity. Capacity is a hardware
    /// build parameter and must be 4, 8 or 16; it never changes afterwards.
    explicit PermissionTable(unsigned capacity = 8)
      : entries_(checkCapacity(capacity))
    { }

    unsigned capacity() const
    { return static_cast<unsigned>(entries_.size()); }

    const PermissionEntry& entry(unsigned ix) const
    { return entries_.at(ix); }

    const std::vector<PermissionEntry>& entries() const
    { return entries_; }

    bool enforceArmed() const
    { return enforceArmed_; }

    bool enforceLocked() const
    { return enforceLocked_; }

    /// Number of entries currently marked valid.
    unsigned validCount() const
    {
      unsigned n = 0;
      for (const auto& e : entries_)
        if (e.valid)
          ++n;
      return n;
    }

    /// Resolve the permissions in effect for addr: the bitwise AND of the
    /// bits of every matching valid entry (most restrictive wins). An
    /// address matched by no entry gets the hardware default: non-privileged,
    /// writable, not supervisor-executable.
    EffectivePerms effectivePerms(uint64_t addr) const
    {
      bool matched = false;
      EffectivePerms p{true, true, true};
      for (const auto& e : entries_)
        if (e.matches(addr))
          {
            matched = true;
            p.priv = p.priv and e.priv;
            p.write = p.write and e.write;
            p.exec = p.exec and e.exec;
          }
      if (not matched)
        return EffectivePerms{false, true, false};
      return p;
    }

    /// Decide whether an access of the given kind at the given physical
    /// address is legal. Pure function of the table state and arguments:
    ///   - enforcement not armed: everything is allowed;
    ///   - stores to a non-writable range are refused first (WriteProtected);
    ///   - data access (load, or store that passed the write check) obeys the
    ///     privileged bit: supervisor touching a non-privileged range is
    ///     refused unless the SUM-style override is on (data only, never
    ///     fetch); user touching a privileged range is always refused;
    ///   - supervisor fetch requires priv and exec both set; user fetch is
    ///     refused only from privileged ranges (user executability is the
    ///     page table's job).
    AccessVerdict checkAccess(uint64_t addr, AccessKind kind,
                              bool privilegedMode, bool sumEnabled) const
    {
      if (not enforceArmed_)
        return AccessVerdict::allow();

      EffectivePerms p = effectivePerms(addr);

      if (kind == AccessKind::Fetch)
        {
          if (privilegedMode)
            {
              if (not p.priv)
                return AccessVerdict::deny(DenyCause::PrivFetchDenied);
              if (not p.exec)
                return AccessVerdict::deny(DenyCause::ExecDenied);
              return AccessVerdict::allow();
            }
          if (p.priv)
            return AccessVerdict::deny(DenyCause::UserAccessToPrivDenied);
          return AccessVerdict::allow();
        }

      if (kind == AccessKind::Store and not p.write)
        return AccessVerdict::deny(DenyCause::WriteProtected);

      if (privilegedMode)
        {
          if (not p.priv and not sumEnabled)
            return AccessVerdict::deny(DenyCause::PrivDataDenied);
          return AccessVerdict::allow();
        }
      if (p.priv)
        return AccessVerdict::deny(DenyCause::UserAccessToPrivDenied);
      return AccessVerdict::allow();
    }

    /// Write one 64-bit register in the MMIO window. Writes targeting a
    /// locked entry, or the enforce word once the enforce lock is set, are
    /// silently discarded (the lock bit masks the register's write enable;
    /// there is no trap). Writing a flags word with the L bit set locks the
    /// entry atomically with whatever else that word carries. Offsets for
    /// entries beyond the built capacity and the reserved word are ignored.
    /// Misaligned or out-of-window offsets are a caller contract violation.
    void mmioWrite(uint64_t offset, uint64_t value)
    {
      checkOffset(offset);

      if (offset == kEnforceOffset)
        {
          if (enforceLocked_)
            return;
          enforceArmed_ = value & kEnforceArm;
          enforceLocked_ = value & kEnforceLock;
          return;
        }

      unsigned ix = static_cast<unsigned>(offset / kEntryStride);
      if (ix >= capacity())
        return;

      PermissionEntry& e = entries_[ix];
      if (e.locked)
        return;

      switch (offset % kEntryStride)
        {
        case kStartOffset: e.start = value; break;
        case kEndOffset:   e.end = value;   break;
        case kFlagsOffset:
          e.priv = value & kFlagPriv;
          e.write = value & kFlagWrite;
          e.exec = value & kFlagExec;
          e.valid = value & kFlagValid;
          e.locked = value & kFlagLocked;
          break;
        default:  // reserved word
          break;
        }
    }

    /// Read one 64-bit register in the MMIO window. Reads are never blocked
    /// by locks. Reserved words and entries beyond capacity read zero.
    uint64_t mmioRead(uint64_t offset) const
    {
      checkOffset(offset);

      if (offset == kEnforceOffset)
        return (enforceArmed_ ? kEnforceArm : 0) | (enforceLocked_ ? kEnforceLock : 0);

      unsigned ix = static_cast<unsigned>(offset / kEntryStride);
      if (ix >= capacity())
        return 0;

      const PermissionEntry& e = entries_[ix];
      switch (offset % kEntryStride)
        {
        case kStartOffset: return e.start;
        case kEndOffset:   return e.end;
        case kFlagsOffset:
          return (e.priv ? kFlagPriv : 0) | (e.write ? kFlagWrite : 0)
            | (e.exec ? kFlagExec : 0) | (e.valid ? kFlagValid : 0)
            | (e.locked ? kFlagLocked : 0);
        default:
          return 0;
        }
    }

    /// Machine reset: every entry returns to the all-zero unlocked invalid
    /// state and both enforce bits clear. This is the only way to clear a
    /// lock.
    void reset()
    {
      for (auto& e : entries_)
        e = PermissionEntry{};
      enforceArmed_ = false;
      enforceLocked_ = false;
    }

    bool operator==(const PermissionTable&) const = default;

  private:

    static unsigned checkCapacity(unsigned capacity)
    {
      if (capacity != 4 and capacity != 8 and capacity != 16)
        throw std::invalid_argument("PermissionTable: capacity must be 4, 8 or 16");
      return capacity;
    }

    static void checkOffset(uint64_t offset)
    {
      if (offset % 8 != 0)
        throw std::invalid_argument("PermissionTable: MMIO offset must be 8-byte aligned");
      if (offset >= kWindowSize)
        throw std::invalid_argument("PermissionTable: MMIO offset outside window");
    }

    std::vector<PermissionEntry> entries_;
    bool enforceArmed_ = false;
    bool enforceLocked_ = false;
  };

  /// Cycles needed to search an n-entry table: one cycle per bank of six
  /// comparators, so a 16-entry table resolves in 3 cycles.
  constexpr unsigned lookupLatencyCycles(unsigned nEntries)
  { return (nEntries + 5) / 6; }

  /// Cache tag-compare and line-read window the lookup must hide inside.
  constexpr unsigned kCacheTagWindowCycles = 4;

  /// True when a lookup over n entries fits inside the cache access window,
  /// i.e. the permission check adds no latency to the access.
  constexpr bool zeroOverhead(unsigned nEntries)
  { return lookupLatencyCycles(nEntries) <= kCacheTagWindowCycles; }

}

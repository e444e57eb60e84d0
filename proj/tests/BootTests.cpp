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

#include <neverland/Boot.hpp>

#include "Oracle.hpp"

using namespace neverland;

namespace
{
  std::vector<uint64_t> tableWords(const Machine& m)
  {
    std::vector<uint64_t> words;
    for (unsigned i = 0; i < m.table().capacity(); ++i)
      {
        uint64_t base = i * PermissionTable::kEntryStride;
        words.push_back(m.table().mmioRead(base + PermissionTable::kStartOffset));
        words.push_back(m.table().mmioRead(base + PermissionTable::kEndOffset));
        words.push_back(m.table().mmioRead(base + PermissionTable::kFlagsOffset));
      }
    words.push_back(m.table().mmioRead(PermissionTable::kEnforceOffset));
    return words;
  }

  /// Read a module's whole text through the virtual path (page-sized walks).
  std::vector<uint8_t> virtualTextDump(Machine& m, const ModulePlacement& mod)
  {
    std::vector<uint8_t> out;
    for (uint64_t p = 0; p < mod.pages; ++p)
      {
        auto t = m.translate(mod.textVa + p * kPageSize, AccessKind::Load);
        REQUIRE(t.ok);
        auto page = m.debugReadBytes(t.paddr, kPageSize);
        out.insert(out.end(), page.begin(), page.end());
      }
    return out;
  }
}

TEST_CASE("standard preset boots and locks down")
{
  Machine m;
  StandardPreset preset = standardPreset();
  BootResult r = loadAndBoot(m, preset.image, preset.modules, preset.config);

  REQUIRE(r.stats.entriesUsed == 6);
  REQUIRE(m.mode() == PrivMode::User);
  REQUIRE(m.pc() == preset.config.userEntry);
  REQUIRE(m.table().enforceArmed());
  REQUIRE(m.table().enforceLocked());
  REQUIRE(m.csrs().stvecLocked());

  for (unsigned i = 0; i < m.table().capacity(); ++i)
    REQUIRE(m.table().entry(i).locked);
  // Spares are sealed: locked but invalid.
  REQUIRE(not m.table().entry(6).valid);
  REQUIRE(not m.table().entry(7).valid);

  // Module text is one physically contiguous run covered by one entry.
  REQUIRE(r.stats.pagesCopied == 6);   // 2 + 3 + 1 pages
  REQUIRE(r.stats.pteRewrites == 6);
  REQUIRE(r.stats.tlbFlushes == 3);    // one per module
  REQUIRE(r.stats.framesFreed == 6);
}

TEST_CASE("boot without modules uses six entries")
{
  Machine m;
  StandardPreset preset = standardPreset();
  BootResult r = loadAndBoot(m, preset.image, {}, preset.config);
  REQUIRE(r.stats.entriesUsed == 6);
  REQUIRE(m.table().validCount() == 6);
  REQUIRE(r.stats.pagesCopied == 0);

  // The packed-module entry exists but covers an empty range.
  REQUIRE(m.table().entry(5).valid);
  REQUIRE(m.table().entry(5).start == m.table().entry(5).end);
}

TEST_CASE("a four-entry table cannot hold the catalog")
{
  MachineConfig mc;
  mc.tableCapacity = 4;
  Machine m(mc);
  StandardPreset preset = standardPreset();
  try
    {
      loadAndBoot(m, preset.image, preset.modules, preset.config);
      FAIL("expected TableBudgetExceeded");
    }
  catch (const BootError& e)
    {
      REQUIRE(e.kind() == BootError::Kind::TableBudgetExceeded);
    }
}

TEST_CASE("defragmentation keeps three modules within eight entries")
{
  Machine m;
  StandardPreset preset = standardPreset();
  BootResult r = loadAndBoot(m, preset.image, preset.modules, preset.config);
  REQUIRE(r.stats.entriesUsed <= 8);
}

TEST_CASE("without defragmentation scattered modules blow the budget")
{
  StandardPreset preset = standardPreset();
  preset.config.defragEnabled = false;

  Machine m;
  try
    {
      loadAndBoot(m, preset.image, preset.modules, preset.config);
      FAIL("expected TableBudgetExceeded");
    }
  catch (const BootError& e)
    {
      REQUIRE(e.kind() == BootError::Kind::TableBudgetExceeded);
    }

  // A single module allocates contiguously, so one run suffices.
  Machine single;
  ModuleBlob only{"solo", patternBytes(2 * kPageSize, 0x66), {}, {}};
  BootResult r = loadAndBoot(single, preset.image, {only}, preset.config);
  REQUIRE(r.stats.entriesUsed == 6);   // 5 catalog + 1 module run
  REQUIRE(r.stats.pagesCopied == 0);   // no defrag ran
}

TEST_CASE("pool smaller than module text fails")
{
  StandardPreset preset = standardPreset();
  preset.config.poolBytes = kPageSize;   // one frame for six pages of text

  Machine m;
  try
    {
      loadAndBoot(m, preset.image, preset.modules, preset.config);
      FAIL("expected PoolTooSmall");
    }
  catch (const BootError& e)
    {
      REQUIRE(e.kind() == BootError::Kind::PoolTooSmall);
    }
}

TEST_CASE("boot refuses a machine that is not freshly reset")
{
  Machine m;
  StandardPreset preset = standardPreset();
  loadAndBoot(m, preset.image, preset.modules, preset.config);

  try
    {
      loadAndBoot(m, preset.image, preset.modules, preset.config);
      FAIL("expected MachineNotReset");
    }
  catch (const BootError& e)
    {
      REQUIRE(e.kind() == BootError::Kind::MachineNotReset);
    }

  // Reset, then boot again.
  m.reset();
  REQUIRE_NOTHROW(loadAndBoot(m, preset.image, preset.modules, preset.config));
}

TEST_CASE("catalog covers exactly the protected regions")
{
  MachineConfig mc;
  mc.tableCapacity = 8;
  Machine m(mc);
  StandardPreset preset = standardPreset();
  preset.config.jitBytes = kPageSize;
  BootResult r = loadAndBoot(m, preset.image, preset.modules, preset.config);
  const BootLayout& lay = r.layout;

  auto effective = [&m](uint64_t pa) { return m.table().effectivePerms(pa); };

  for (uint64_t pa = lay.kernelText.pa; pa < lay.kernelText.pa + lay.kernelText.bytes;
       ++pa)
    {
      EffectivePerms p = effective(pa);
      REQUIRE(p.priv);
      REQUIRE(not p.write);
      REQUIRE(p.exec);
    }

  for (const Region* reg : {&lay.rodata, &lay.syscallTable, &lay.configFlags})
    for (uint64_t pa = reg->pa; pa < reg->pa + reg->bytes; ++pa)
      {
        EffectivePerms p = effective(pa);
        REQUIRE(p.priv);
        REQUIRE(not p.write);
      }

  // Kernel data: privileged and writable (the entry is locked, not the RAM).
  EffectivePerms data = effective(lay.kernelData.pa);
  REQUIRE(data.priv);
  REQUIRE(data.write);
  REQUIRE(not data.exec);

  // Nothing outside the catalog is privileged-executable.
  auto fetchable = [&effective](uint64_t pa) {
    EffectivePerms p = effective(pa);
    return p.priv and p.exec;
  };
  auto inside = [](const Region& reg, uint64_t pa) {
    return pa >= reg.pa and pa < reg.pa + padToPage(reg.bytes);
  };
  uint64_t ramEnd = m.config().ramBase + m.config().ramSize;
  for (uint64_t pa = m.config().ramBase; pa < ramEnd; pa += 512)
    if (fetchable(pa))
      REQUIRE((inside(lay.kernelText, pa) or inside(lay.modulePool, pa)
               or inside(lay.jitRegion, pa)));
}

TEST_CASE("post-boot lockdown is immune to further programming")
{
  Machine m;
  StandardPreset preset = standardPreset();
  loadAndBoot(m, preset.image, preset.modules, preset.config);

  std::vector<uint64_t> before = tableWords(m);
  std::mt19937_64 rng(0x10cd'0000);
  for (int i = 0; i < 500; ++i)
    {
      uint64_t offset = (rng() % (PermissionTable::kWindowSize / 8)) * 8;
      m.table().mmioWrite(offset, rng());
    }
  REQUIRE(tableWords(m) == before);
}

TEST_CASE("boot is deterministic")
{
  StandardPreset preset = standardPreset();

  Machine a, b;
  BootResult ra = loadAndBoot(a, preset.image, preset.modules, preset.config);
  BootResult rb = loadAndBoot(b, preset.image, preset.modules, preset.config);

  REQUIRE(ra.stats == rb.stats);
  REQUIRE(tableWords(a) == tableWords(b));
  REQUIRE(a.debugReadBytes(ra.layout.kernelText.pa, 4096)
          == b.debugReadBytes(rb.layout.kernelText.pa, 4096));
  REQUIRE(a.pc() == b.pc());
}

// ----- Defragmentation against the virtual-read oracle -----

namespace
{
  struct DefragFixture
  {
    Machine m;
    FrameAllocator alloc;
    PoolRegion pool;
    std::vector<ModuleBlob> blobs;
    std::vector<ModulePlacement> placed;
    uint64_t scatteredFrames = 0;

    DefragFixture(const std::vector<uint64_t>& pagesPerModule, uint64_t poolFrames,
                  uint64_t seed)
      : alloc(m.config().ramBase >> kPageShift, m.config().ramSize >> kPageShift)
    {
      pool = {alloc.allocateRun(poolFrames), poolFrames};

      // Gather frames for all modules, then deal them out shuffled so each
      // module is physically fragmented.
      uint64_t total = 0;
      for (uint64_t pages : pagesPerModule)
        total += pages;
      scatteredFrames = total;

      std::vector<uint64_t> frames;
      for (uint64_t i = 0; i < total; ++i)
        frames.push_back(alloc.allocate());
      std::mt19937_64 rng(seed);
      std::shuffle(frames.begin(), frames.end(), rng);

      size_t next = 0;
      for (size_t i = 0; i < pagesPerModule.size(); ++i)
        {
          ModuleBlob blob;
          blob.name = "m" + std::to_string(i);
          blob.text = patternBytes(pagesPerModule[i] * kPageSize,
                                   uint8_t(seed + i * 7 + 1));
          blobs.push_back(blob);

          std::vector<uint64_t> own(frames.begin() + next,
                                    frames.begin() + next + pagesPerModule[i]);
          next += pagesPerModule[i];
          placed.push_back(placeModuleText(m, blobs.back(),
                                           kModuleVbase + i * kModuleSlotBytes, own));
        }
    }
  };
}

TEST_CASE("defragmenting zero modules frees the whole pool")
{
  DefragFixture f({}, 8, 1);
  DefragStats st = defragment(f.m, f.placed, f.pool, f.alloc);
  REQUIRE(st.pagesCopied == 0);
  REQUIRE(st.pteRewrites == 0);
  REQUIRE(st.framesFreed == 0);
  REQUIRE(st.poolTailFreed == 8);
  for (uint64_t p = f.pool.basePfn; p < f.pool.basePfn + 8; ++p)
    REQUIRE(f.alloc.isFree(p));
}

TEST_CASE("defragmentation preserves every virtual byte and packs physically")
{
  std::mt19937_64 seeds(0xdef2'a6ed);
  for (int trial = 0; trial < 15; ++trial)
    {
      std::vector<uint64_t> pages;
      unsigned nModules = 1 + seeds() % 6;
      uint64_t total = 0;
      for (unsigned i = 0; i < nModules; ++i)
        {
          pages.push_back(1 + seeds() % 8);
          total += pages.back();
        }

      DefragFixture f(pages, total + seeds() % 4, seeds());

      std::vector<std::vector<uint8_t>> before;
      for (auto& mod : f.placed)
        before.push_back(virtualTextDump(f.m, mod));

      uint64_t freeBefore = f.alloc.freeCount();
      DefragStats st = defragment(f.m, f.placed, f.pool, f.alloc);

      REQUIRE(st.pagesCopied == total);
      REQUIRE(st.pteRewrites == st.pagesCopied);
      REQUIRE(st.tlbFlushes == nModules);
      REQUIRE(st.framesFreed == f.scatteredFrames);
      REQUIRE(st.poolTailFreed == f.pool.frames - total);

      // Byte-identical virtual reads.
      for (size_t i = 0; i < f.placed.size(); ++i)
        REQUIRE(virtualTextDump(f.m, f.placed[i]) == before[i]);

      // One contiguous physical run covering all module text, in order.
      uint64_t expect = f.pool.basePfn;
      for (const auto& mod : f.placed)
        for (uint64_t pfn : mod.frames)
          REQUIRE(pfn == expect++);

      // Frame accounting balances: everything scattered came back, plus the
      // pool tail.
      REQUIRE(f.alloc.freeCount()
              == freeBefore + f.scatteredFrames + st.poolTailFreed);
    }
}

TEST_CASE("a 128 KiB module copies exactly 32 pages")
{
  DefragFixture f({32}, 32, 99);
  DefragStats st = defragment(f.m, f.placed, f.pool, f.alloc);
  REQUIRE(st.pagesCopied == 32);
  REQUIRE(st.pteRewrites == 32);
  REQUIRE(st.tlbFlushes == 1);
}

TEST_CASE("defrag work grows monotonically with module size")
{
  uint64_t previous = 0;
  for (uint64_t kib : {128, 256, 512, 1024})
    {
      uint64_t pages = kib * 1024 / kPageSize;
      DefragFixture f({pages}, pages, kib);
      DefragStats st = defragment(f.m, f.placed, f.pool, f.alloc);
      uint64_t work = st.pagesCopied + st.pteRewrites + st.framesFreed;
      REQUIRE(work > previous);
      previous = work;
    }
}

TEST_CASE("skipping the TLB flush leaves stale translations observable")
{
  DefragFixture f({2}, 2, 7);
  ModulePlacement& mod = f.placed[0];

  // Warm the TLB with the pre-defrag translation.
  auto warm = f.m.translate(mod.textVa, AccessKind::Load);
  REQUIRE(warm.ok);
  uint64_t oldPa = warm.paddr;

  DefragStats st = defragment(f.m, f.placed, f.pool, f.alloc, false);
  REQUIRE(st.tlbFlushes == 0);

  // Stale: the TLB still answers with the old frame even though the page
  // map moved on.
  auto stale = f.m.translate(mod.textVa, AccessKind::Load);
  REQUIRE(stale.paddr == oldPa);
  REQUIRE(f.m.findPage(mod.textVa >> kPageShift)->pfn == f.pool.basePfn);

  f.m.flushTlb();
  auto fresh = f.m.translate(mod.textVa, AccessKind::Load);
  REQUIRE(fresh.paddr == f.pool.basePfn * kPageSize);
}

TEST_CASE("frame allocator flags double frees and foreign frames")
{
  FrameAllocator alloc(0x100, 16);
  uint64_t a = alloc.allocate();
  alloc.release(a);
  REQUIRE_THROWS_AS(alloc.release(a), std::logic_error);
  REQUIRE_THROWS_AS(alloc.release(0x99), std::logic_error);

  alloc.take(0x105);
  REQUIRE(not alloc.isFree(0x105));
  REQUIRE_THROWS_AS(alloc.take(0x105), std::runtime_error);

  uint64_t run = alloc.allocateRun(4);
  for (uint64_t p = run; p < run + 4; ++p)
    REQUIRE(not alloc.isFree(p));
}

TEST_CASE("module data stays writable inside the kernel data arena")
{
  Machine m;
  StandardPreset preset = standardPreset();
  BootResult r = loadAndBoot(m, preset.image, preset.modules, preset.config);
  m.setMode(PrivMode::Supervisor);   // kernel-side view

  // The first module's data is mapped right after its text in VA space.
  uint64_t dataVa = kModuleVbase + padToPage(preset.modules[0].text.size());
  auto t = m.translate(dataVa, AccessKind::Store);
  REQUIRE(t.ok);

  // Physically inside the arena, hence privileged-writable after lockdown.
  REQUIRE(t.paddr >= r.layout.kernelData.pa);
  REQUIRE(t.paddr < r.layout.kernelData.pa + r.layout.kernelData.bytes);
  EffectivePerms p = m.table().effectivePerms(t.paddr);
  REQUIRE(p.priv);
  REQUIRE(p.write);
}

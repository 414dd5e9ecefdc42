/** Shape derivation for the three-block network (frozen layout contract). */

export interface NetConfig {
  nC: number;
  nClasses: number;
  nB: number;
  p: number;
  block1Kernel: "1x1" | "3x3";
}

export interface ConvShape {
  hIn: number;
  wIn: number;
  cIn: number;
  hOut: number;
  wOut: number;
  cOut: number;
}

export interface Shapes {
  bandWidth: number;
  block2: ConvShape[];
  concatLen: number;
  hidden: number;
}

export const BLOCK2_CHANNELS = [1, 2, 4, 4, 4];
export const HIDDEN = 120;

export const PRESETS: Record<string, NetConfig> = {
  "indian-pines": { nC: 220, nClasses: 11, nB: 4, p: 3, block1Kernel: "1x1" },
  salinas: { nC: 224, nClasses: 16, nB: 8, p: 3, block1Kernel: "1x1" },
  ksc: { nC: 176, nClasses: 13, nB: 8, p: 5, block1Kernel: "3x3" },
  botswana: { nC: 144, nClasses: 14, nB: 8, p: 5, block1Kernel: "3x3" },
};

export function deriveShapes(cfg: NetConfig): Shapes {
  if (cfg.nC % cfg.nB !== 0) {
    throw new Error(`N_c=${cfg.nC} is not divisible by N_b=${cfg.nB}`);
  }
  const k = cfg.block1Kernel === "3x3" ? 3 : 1;
  if (cfg.p - k + 1 !== 3) {
    throw new Error(
      `Block-1 output must be 3x3 (patch ${cfg.p} with ${cfg.block1Kernel} kernel leaves ${cfg.p - k + 1})`,
    );
  }
  const bandWidth = cfg.nC / cfg.nB;
  if (bandWidth - 8 < 1) {
    throw new Error(`band width ${bandWidth} too small for four 3x3 convolutions`);
  }
  const block2: ConvShape[] = [];
  let h = 9;
  let w = bandWidth;
  for (let i = 0; i < 4; i++) {
    block2.push({
      hIn: h,
      wIn: w,
      cIn: BLOCK2_CHANNELS[i],
      hOut: h - 2,
      wOut: w - 2,
      cOut: BLOCK2_CHANNELS[i + 1],
    });
    h -= 2;
    w -= 2;
  }
  const concatLen = cfg.nB * h * w * BLOCK2_CHANNELS[4];
  return { bandWidth, block2, concatLen, hidden: HIDDEN };
}

"""Fair multi-party coin flipping in a defense/coin hybrid model, with exact game and LP analysis."""

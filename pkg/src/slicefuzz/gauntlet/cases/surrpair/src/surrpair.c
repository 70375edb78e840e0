#include <stdio.h>

static unsigned read_u16(const unsigned char *p) {
    return ((unsigned)p[0] << 8) | p[1];
}

int main(void) {
    unsigned char buf[8];
    unsigned first;
    unsigned second;
    size_t n = fread(buf, 1, sizeof buf, stdin);
    if (n < 4) {
        return 1;
    }
    first = read_u16(buf);
    if (first < 0xD800 || first > 0xDBFF) {
        return 1;
    }
    second = read_u16(buf + 2);
    if (second < 0xDC00 || second > 0xDFFF) {
        return 1;
    }
    puts("pair ok");
    return 0;
}

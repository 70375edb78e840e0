#include <stdio.h>
#include <string.h>

int main(void) {
    unsigned char buf[64];
    size_t i = 0;
    size_t n = fread(buf, 1, sizeof buf, stdin);
    while (i + 2 <= n) {
        unsigned char tag = buf[i];
        unsigned char len = buf[i + 1];
        if (i + 2 + len > n) {
            return 1;
        }
        if (tag == 0x10) {
            if (len == 4 && memcmp(buf + i + 2, "CRC!", 4) == 0) {
                puts("tlv hit");
            }
        }
        i += 2 + (size_t)len;
    }
    return 0;
}

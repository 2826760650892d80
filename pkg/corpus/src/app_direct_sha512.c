int safe_sha512(const void *msg, int len, void *digest);

static __attribute__((noinline)) int hash_payload(void)
{
    char digest[64];
    return safe_sha512("corpus-sha", 10, digest);
}

int main(void)
{
    return hash_payload();
}

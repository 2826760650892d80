/* No dynamic dependencies at all. */
static __attribute__((noinline)) int mix(int seed)
{
    return seed * 31 + 7;
}

int main(void)
{
    return mix(5) - 162;
}
